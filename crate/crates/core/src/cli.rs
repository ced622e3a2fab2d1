//! Command-line front end. Exit codes: 0 success or accept, 1 reject,
//! 2 usage error, 3 data error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::contourcode::{self, ContourCode, Neighborhood};
use crate::error::{PalmError, Result};
use crate::eval::{self, CmcReport, Protocol, ProtocolReport};
use crate::gallery::{Entry, HashTable};
use crate::matcher::{self, column_scores, Mode, Query};
use crate::nsct::{self, FilterBank};
use crate::pipeline::{Pipeline, DEFAULT_MARGIN};
use crate::raster::{read_pgm, resize_bicubic, write_pgm, GrayImage};
use crate::roi::{self, HandOrientation, RoiConfig, RoiSet, ThresholdPolicy, ROI_SIDE};
use crate::synth::{self, SynthHandSpec, SynthIdentitySpec};

pub const EXIT_REJECT: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;

/// Name of the corpus index written next to sample directories.
pub const CORPUS_MANIFEST: &str = "manifest.json";

/// Pipeline defaults: k = 3, 32 x 32 ROI, margins 3, 4-connected blur,
/// ATM matching, built-in filter bank, fingers from the left, Otsu.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub k: u32,
    pub roi_side: usize,
    pub t_x: usize,
    pub t_y: usize,
    pub blur: Neighborhood,
    pub mode: Mode,
    pub filter_bank: Option<PathBuf>,
    pub hand_orientation: HandOrientation,
    pub threshold: ThresholdPolicy,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            k: 3,
            roi_side: ROI_SIDE,
            t_x: DEFAULT_MARGIN,
            t_y: DEFAULT_MARGIN,
            blur: Neighborhood::Four,
            mode: Mode::Atm,
            filter_bank: None,
            hand_orientation: HandOrientation::Left,
            threshold: ThresholdPolicy::Otsu,
        }
    }
}

impl Config {
    pub fn pipeline(&self) -> Result<Pipeline> {
        let bank = match &self.filter_bank {
            Some(path) => nsct::load_bank(path)?,
            None => FilterBank::for_order(self.k),
        };
        if bank.k() != self.k {
            return Err(PalmError::ParamMismatch(format!("filter bank has k={}, config k={}", bank.k(), self.k)));
        }
        Ok(Pipeline { bank, tx: self.t_x, ty: self.t_y, blur: self.blur })
    }

    pub fn roi_config(&self) -> RoiConfig {
        RoiConfig {
            threshold: self.threshold,
            orientation: self.hand_orientation,
            roi_side: self.roi_side,
            ..RoiConfig::default()
        }
    }

    /// Hash stored in galleries built with this configuration.
    pub fn hash(&self) -> Result<String> {
        Ok(self.pipeline()?.config_hash(self.roi_side, self.roi_side))
    }
}

/// One sample of a corpus directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSample {
    #[serde(flatten)]
    pub entry: Entry,
    /// Sample directory relative to the corpus root.
    pub path: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CorpusKind {
    /// 32 x 32 ROI bands.
    Roi,
    /// Full hand images.
    Hands,
}

/// Index of a corpus directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub kind: CorpusKind,
    pub bands: usize,
    pub seed: Option<u64>,
    pub samples: Vec<CorpusSample>,
}

impl Corpus {
    /// Reads `manifest.json`, or without one treats every directory holding
    /// PGM files as a sample of the identity named by its parent directory.
    pub fn load(root: &Path) -> Result<Self> {
        let index = root.join(CORPUS_MANIFEST);
        if index.exists() {
            return Ok(serde_json::from_slice(&fs::read(index)?)?);
        }
        let mut dirs: Vec<PathBuf> = walkdir::WalkDir::new(root)
            .sort_by_file_name()
            .into_iter()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_type().is_dir())
            .map(|e| e.into_path())
            .filter(|d| pgm_files(d).is_ok_and(|f| !f.is_empty()))
            .collect();
        dirs.sort();
        let mut samples: Vec<CorpusSample> = Vec::new();
        for d in &dirs {
            let rel = d.strip_prefix(root).unwrap_or(d).to_path_buf();
            let identity = rel
                .parent()
                .and_then(|p| p.file_name())
                .map_or_else(|| rel.to_string_lossy().into_owned(), |n| n.to_string_lossy().into_owned());
            let index = samples.iter().filter(|s| s.entry.identity == identity).count() as u32;
            samples.push(CorpusSample { entry: Entry::new(identity, index, 1), path: rel });
        }
        // Without session labels the first half of each identity is session 1.
        let counts: Vec<usize> =
            samples.iter().map(|s| samples.iter().filter(|o| o.entry.identity == s.entry.identity).count()).collect();
        for (s, n) in samples.iter_mut().zip(counts) {
            s.entry.session = synth::session_of(s.entry.sample as usize, n);
        }
        let bands = samples.first().map_or(Ok(0), |s| pgm_files(&root.join(&s.path)).map(|f| f.len()))?;
        Ok(Self { kind: CorpusKind::Roi, bands, seed: None, samples })
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        fs::write(root.join(CORPUS_MANIFEST), serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    /// Loads every sample's ROI bands.
    pub fn load_rois(&self, root: &Path) -> Result<Vec<(Entry, RoiSet)>> {
        if self.kind != CorpusKind::Roi {
            return Err(PalmError::Format("corpus holds hand images; run extract-roi first".into()));
        }
        self.samples
            .par_iter()
            .map(|s| Ok((s.entry.clone(), load_roi_dir(&root.join(&s.path))?)))
            .collect()
    }
}

/// PGM files of a directory in band order (`band2` before `band10`).
pub fn pgm_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")))
        .collect();
    files.sort_by_key(|p| {
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        (name.len(), name)
    });
    Ok(files)
}

fn stem(p: &Path) -> String {
    p.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned())
}

/// Reads the band PGMs of one sample directory.
pub fn load_roi_dir(dir: &Path) -> Result<RoiSet> {
    let files = pgm_files(dir)?;
    if files.is_empty() {
        return Err(PalmError::Format(format!("no PGM bands in {}", dir.display())));
    }
    let bands = files.iter().map(read_pgm).collect::<Result<Vec<_>>>()?;
    RoiSet::with_labels(bands, files.iter().map(|p| stem(p)).collect())
}

fn write_bands(dir: &Path, bands: &[GrayImage], labels: &[String]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (img, label) in bands.iter().zip(labels) {
        write_pgm(dir.join(format!("{label}.pgm")), img)?;
    }
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, serde_json::to_vec_pretty(value)?)?;
    Ok(())
}

fn print_json(value: &impl Serialize) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn band_labels(n: usize) -> Vec<String> {
    (0..n).map(|b| format!("band{b}")).collect()
}

#[derive(Debug, Parser)]
#[command(name = "palmcode", about = "Multispectral palmprint encoding and matching", disable_version_flag = true)]
pub struct Cli {
    /// Print the version and the default configuration hash.
    #[arg(short = 'V', long)]
    pub version: bool,
    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Option<Command>,
}

/// Encoding parameters shared by commands that build codes.
#[derive(Debug, Clone, Args)]
pub struct EncodingArgs {
    /// Directional filter bank order (2^k orientations).
    #[arg(long, default_value_t = 3)]
    pub k: u32,
    /// Crop margin and translation search radius, both axes.
    #[arg(long, default_value_t = DEFAULT_MARGIN)]
    pub margin: usize,
    /// Gallery blur neighbourhood: none, 4 or 8.
    #[arg(long, default_value = "4-connected")]
    pub blur: Neighborhood,
    /// Filter bank file replacing the built-in bank.
    #[arg(long)]
    pub filter_bank: Option<PathBuf>,
}

impl EncodingArgs {
    fn config(&self) -> Config {
        Config {
            k: self.k,
            t_x: self.margin,
            t_y: self.margin,
            blur: self.blur,
            filter_bank: self.filter_bank.clone(),
            ..Config::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct MatchArgs {
    /// Gallery file.
    #[arg(long)]
    pub gallery: PathBuf,
    /// Directory holding the query's band PGMs.
    #[arg(long)]
    pub roi_dir: PathBuf,
    #[arg(long, default_value = "atm")]
    pub mode: Mode,
    /// Filter bank file the gallery was built with, if not built in.
    #[arg(long)]
    pub filter_bank: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus of ROIs or whole hands.
    Synth {
        #[arg(long, default_value_t = 50)]
        ids: usize,
        #[arg(long, default_value_t = 6)]
        samples: usize,
        #[arg(long, default_value_t = 4)]
        bands: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "roi")]
        kind: CorpusKind,
    },
    /// Locate landmarks and cut registered ROIs from hand images.
    ExtractRoi {
        /// A sample directory or a corpus of them.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Number of bands per hand; defaults to all PGMs found.
        #[arg(long)]
        bands: Option<usize>,
        #[arg(long, default_value = "left")]
        hand_orientation: HandOrientation,
        /// `otsu` or a fixed 0..=255 level.
        #[arg(long, default_value = "otsu")]
        threshold: ThresholdPolicy,
        #[arg(long, default_value_t = ROI_SIDE)]
        roi_side: usize,
    },
    /// Pack the blurred hash codes of one ROI sample.
    Encode {
        #[arg(long)]
        roi_dir: PathBuf,
        /// Write the packed bands here, concatenated.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        encoding: EncodingArgs,
    },
    /// Add samples to a gallery file, creating it if needed.
    Enroll {
        #[arg(long)]
        gallery: PathBuf,
        /// One sample directory; needs --id.
        #[arg(long, conflicts_with = "corpus", required_unless_present = "corpus")]
        roi_dir: Option<PathBuf>,
        /// Enroll every sample of a corpus directory.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, required_unless_present = "corpus")]
        id: Option<String>,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
        session: u8,
        /// Sample index; defaults to the next free one for the identity.
        #[arg(long)]
        sample: Option<u32>,
        #[command(flatten)]
        encoding: EncodingArgs,
    },
    /// Rank gallery identities against a query.
    Identify {
        #[command(flatten)]
        query: MatchArgs,
        #[arg(long, default_value_t = 5)]
        top: usize,
    },
    /// Accept or reject an identity claim (exit 0 accept, 1 reject).
    Verify {
        #[command(flatten)]
        query: MatchArgs,
        #[arg(long)]
        claim: String,
        #[arg(long)]
        threshold: u32,
    },
    /// Run session protocols, ROC/EER and CMC on a ROI corpus.
    Eval {
        #[arg(long)]
        gallery_dir: PathBuf,
        /// exp1..exp5 or `all`.
        #[arg(long, default_value = "exp5")]
        protocol: String,
        #[arg(long, default_value = "atm")]
        mode: Mode,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        /// Seed of the CMC gallery selection.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also sweep ROI size, filter order and blur one at a time.
        #[arg(long)]
        sweep: bool,
        #[command(flatten)]
        encoding: EncodingArgs,
    },
    /// Measure matching throughput and encoding cost.
    Bench {
        /// Benchmark against this gallery instead of a synthetic one.
        #[arg(long)]
        gallery: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        columns: usize,
        #[arg(long, default_value_t = 20)]
        queries: usize,
        #[arg(long, default_value_t = 4)]
        bands: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write the built-in filter bank of order k as text.
    Kernels {
        #[arg(long, default_value_t = 3)]
        k: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses arguments and runs; the returned code is the process exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    if cli.version {
        return match Config::default().hash() {
            Ok(h) => {
                println!("palmcode {} config {h}", env!("CARGO_PKG_VERSION"));
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        };
    }
    let Some(command) = cli.command else {
        eprintln!("error: a subcommand is required (see --help)");
        return ExitCode::from(EXIT_USAGE);
    };
    match run(command) {
        Ok(code) => code,
        Err(e) => fail(e),
    }
}

fn fail(e: PalmError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(EXIT_DATA)
}

pub fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Synth { ids, samples, bands, out, seed, kind } => cmd_synth(ids, samples, bands, &out, seed, kind),
        Command::ExtractRoi { input, out, bands, hand_orientation, threshold, roi_side } => {
            let cfg = Config { hand_orientation, threshold, roi_side, ..Config::default() };
            cmd_extract(&input, &out, bands, &cfg)
        }
        Command::Encode { roi_dir, out, encoding } => cmd_encode(&roi_dir, out.as_deref(), &encoding.config()),
        Command::Enroll { gallery, roi_dir, corpus, id, session, sample, encoding } => {
            let cfg = encoding.config();
            match (roi_dir, corpus) {
                (_, Some(corpus)) => cmd_enroll_corpus(&gallery, &corpus, &cfg),
                (Some(dir), None) => {
                    let id = id.ok_or_else(|| PalmError::Format("--id is required with --roi-dir".into()))?;
                    cmd_enroll(&gallery, &dir, &id, session, sample, &cfg)
                }
                (None, None) => Err(PalmError::Format("give --roi-dir or --corpus".into())),
            }
        }
        Command::Identify { query, top } => cmd_identify(&query, top),
        Command::Verify { query, claim, threshold } => cmd_verify(&query, &claim, threshold),
        Command::Eval { gallery_dir, protocol, mode, report, folds, seed, sweep, encoding } => {
            let protocols = if protocol.eq_ignore_ascii_case("all") {
                Protocol::ALL.to_vec()
            } else {
                vec![protocol.parse()?]
            };
            let opts = EvalOptions { protocols, mode, folds, seed, sweep };
            cmd_eval(&gallery_dir, report.as_deref(), &encoding.config(), &opts)
        }
        Command::Bench { gallery, columns, queries, bands, seed } => {
            print_json(&bench(gallery.as_deref(), columns, queries, bands, seed)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Kernels { k, out } => {
            let bank = FilterBank::synthesize(k);
            match out {
                Some(path) => bank.save(path)?,
                None => print!("{}", bank.to_text()),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn sample_dir(entry: &Entry) -> PathBuf {
    Path::new(&entry.identity).join(format!("s{:02}", entry.sample))
}

fn cmd_synth(ids: usize, samples: usize, bands: usize, out: &Path, seed: u64, kind: CorpusKind) -> Result<ExitCode> {
    if ids == 0 || samples == 0 || bands == 0 {
        return Err(PalmError::SpecInvalid("ids, samples and bands must be positive".into()));
    }
    fs::create_dir_all(out)?;
    let labels = band_labels(bands);
    let mut index = Vec::with_capacity(ids * samples);
    match kind {
        CorpusKind::Roi => {
            for (entry, set) in synth::roi_corpus(ids, samples, bands, seed)? {
                let path = sample_dir(&entry);
                write_bands(&out.join(&path), &set.bands, &labels)?;
                index.push(CorpusSample { entry, path });
            }
        }
        CorpusKind::Hands => {
            let hands: Vec<Vec<(Entry, synth::SynthHand, SynthHandSpec)>> = (0..ids)
                .into_par_iter()
                .map(|i| {
                    let id_seed = synth::identity_seed(seed, i);
                    let identity = SynthIdentitySpec::random(id_seed);
                    let geometry = SynthHandSpec::random(id_seed);
                    (0..samples)
                        .map(|s| {
                            let spec = geometry.clone().posed(synth::stream_seed(id_seed, s as u64 + 1));
                            let hand = synth::gen_hand_bands(&spec, &identity, bands)?;
                            let entry =
                                Entry::new(synth::identity_label(i), s as u32, synth::session_of(s, samples));
                            Ok((entry, hand, spec))
                        })
                        .collect()
                })
                .collect::<Result<_>>()?;
            for (entry, hand, spec) in hands.into_iter().flatten() {
                let path = sample_dir(&entry);
                write_bands(&out.join(&path), &hand.bands, &labels)?;
                let truth = json!({
                    "landmarks": hand.landmarks,
                    "thumb_valley": hand.thumb_valley,
                    "palm_width": hand.width,
                    "spec": spec,
                });
                write_json(&out.join(&path).join("truth.json"), &truth)?;
                index.push(CorpusSample { entry, path });
            }
        }
    }
    let corpus = Corpus { kind, bands, seed: Some(seed), samples: index };
    corpus.save(out)?;
    print_json(&json!({ "kind": kind, "samples": corpus.samples.len(), "bands": bands, "seed": seed, "out": out }))?;
    Ok(ExitCode::SUCCESS)
}

/// Sidecar written next to each extracted ROI.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoiSidecar {
    /// Landmarks in source image coordinates.
    pub landmarks: roi::Landmarks,
    pub thumb_valley: crate::raster::Point,
    pub palm_width: f64,
    pub theta: f64,
    pub shifts: Vec<(i32, i32)>,
    /// Source pixels per ROI pixel.
    pub scale_factor: f64,
    pub fallbacks: usize,
    pub orientation: HandOrientation,
}

fn extract_one(dir: &Path, bands: Option<usize>, cfg: &Config) -> Result<(RoiSet, RoiSidecar)> {
    let mut files = pgm_files(dir)?;
    if let Some(n) = bands {
        if files.len() < n {
            return Err(PalmError::Format(format!("{} has {} bands, need {n}", dir.display(), files.len())));
        }
        files.truncate(n);
    }
    if files.is_empty() {
        return Err(PalmError::Format(format!("no PGM bands in {}", dir.display())));
    }
    let images = files.iter().map(read_pgm).collect::<Result<Vec<_>>>()?;
    let labels = files.iter().map(|p| stem(p)).collect();
    let (set, analysis) = roi::process_hand(&images, labels, &cfg.roi_config())?;
    let (w, h) = images[0].dims();
    let o = cfg.hand_orientation;
    let back = |p| o.point_to_source(p, w, h);
    let lm = analysis.landmarks;
    let (p1, p2, p3) = (back(lm.p1), back(lm.p2), back(lm.p3));
    // `theta` stays in the canonical frame; the landmark copy is re-measured in the source.
    let sidecar = RoiSidecar {
        landmarks: roi::Landmarks { p1, p2, p3, theta: roi::axis_angle(p1, p2), ..lm },
        thumb_valley: back(analysis.valleys.p4),
        palm_width: lm.palm_width_bar,
        theta: lm.theta,
        shifts: set.shifts.clone(),
        scale_factor: set.scale_factor,
        fallbacks: analysis.fallbacks,
        orientation: o,
    };
    Ok((set, sidecar))
}

fn cmd_extract(input: &Path, out: &Path, bands: Option<usize>, cfg: &Config) -> Result<ExitCode> {
    let single = !pgm_files(input)?.is_empty() && !input.join(CORPUS_MANIFEST).exists();
    let corpus = if single {
        None
    } else {
        let mut c = Corpus::load(input)?;
        c.kind = CorpusKind::Roi;
        Some(c)
    };
    let jobs: Vec<PathBuf> = match &corpus {
        None => vec![PathBuf::new()],
        Some(c) => c.samples.iter().map(|s| s.path.clone()).collect(),
    };
    let results: Vec<Result<(RoiSet, RoiSidecar)>> =
        jobs.par_iter().map(|rel| extract_one(&input.join(rel), bands, cfg)).collect();
    let mut failed = Vec::new();
    let mut kept = Vec::new();
    for (i, (rel, r)) in jobs.iter().zip(results).enumerate() {
        match r {
            Ok((set, sidecar)) => {
                let dir = out.join(rel);
                write_bands(&dir, &set.bands, &set.band_labels)?;
                write_json(&dir.join("roi.json"), &sidecar)?;
                kept.push(i);
            }
            Err(e) => failed.push(json!({ "sample": rel, "error": e.to_string() })),
        }
    }
    if let Some(mut c) = corpus {
        c.samples = kept.iter().map(|&i| c.samples[i].clone()).collect();
        c.bands = bands.unwrap_or(c.bands);
        fs::create_dir_all(out)?;
        c.save(out)?;
    }
    print_json(&json!({ "extracted": kept.len(), "failed": failed }))?;
    Ok(if failed.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(EXIT_DATA) })
}

fn cmd_encode(dir: &Path, out: Option<&Path>, cfg: &Config) -> Result<ExitCode> {
    let set = load_roi_dir(dir)?;
    let pipeline = cfg.pipeline()?;
    let mut packed = Vec::new();
    let mut per_band = Vec::new();
    for code in pipeline.codes(&set)? {
        let bytes = contourcode::pack(&pipeline.gallery_map(&code)?);
        per_band.push(bytes.len());
        packed.extend(bytes);
    }
    if let Some(path) = out {
        fs::write(path, &packed)?;
    }
    let (w, h) = set.bands[0].dims();
    print_json(&json!({
        "bands": set.band_count(),
        "bytes_per_band": per_band,
        "total_bytes": packed.len(),
        "config_hash": pipeline.config_hash(w, h),
        "sha256": hex::encode(Sha256::digest(&packed)),
    }))?;
    Ok(ExitCode::SUCCESS)
}

fn open_or_create(path: &Path, pipeline: &Pipeline, set: &RoiSet) -> Result<HashTable> {
    if path.exists() {
        return HashTable::load(path);
    }
    let (w, h) = set.bands[0].dims();
    HashTable::new(pipeline, w, h, set.band_labels.clone())
}

fn cmd_enroll(
    gallery: &Path,
    dir: &Path,
    id: &str,
    session: u8,
    sample: Option<u32>,
    cfg: &Config,
) -> Result<ExitCode> {
    let set = load_roi_dir(dir)?;
    let pipeline = cfg.pipeline()?;
    let mut table = open_or_create(gallery, &pipeline, &set)?;
    let sample = sample.unwrap_or_else(|| {
        table.entries().iter().filter(|e| e.identity == id).map(|e| e.sample + 1).max().unwrap_or(0)
    });
    let column = table.enroll(&set, Entry::new(id, sample, session), &pipeline)?;
    table.save(gallery)?;
    print_json(&json!({ "column": column, "identity": id, "sample": sample, "session": session, "columns": table.columns() }))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_enroll_corpus(gallery: &Path, root: &Path, cfg: &Config) -> Result<ExitCode> {
    let samples = Corpus::load(root)?.load_rois(root)?;
    let Some((_, first)) = samples.first() else {
        return Err(PalmError::EmptyGallery);
    };
    let pipeline = cfg.pipeline()?;
    let mut table = open_or_create(gallery, &pipeline, first)?;
    let codes: Vec<Vec<ContourCode>> = samples.par_iter().map(|(_, s)| pipeline.codes(s)).collect::<Result<_>>()?;
    for ((entry, _), c) in samples.iter().zip(&codes) {
        table.push_codes(c, entry.clone(), &pipeline)?;
    }
    table.save(gallery)?;
    print_json(&json!({ "enrolled": samples.len(), "columns": table.columns() }))?;
    Ok(ExitCode::SUCCESS)
}

fn load_query(args: &MatchArgs) -> Result<(HashTable, Query)> {
    let table = HashTable::load(&args.gallery)?;
    let bank = args.filter_bank.as_ref().map(nsct::load_bank).transpose()?;
    let pipeline = Pipeline::for_gallery(table.manifest(), bank)?;
    let set = load_roi_dir(&args.roi_dir)?;
    let query = Query::new(&pipeline.codes(&set)?, table.manifest())?;
    Ok((table, query))
}

fn cmd_identify(args: &MatchArgs, top: usize) -> Result<ExitCode> {
    let (table, query) = load_query(args)?;
    let result = matcher::identify(&query, &table, args.mode)?;
    let ranked: Vec<_> = result
        .ranked_identities(&table)
        .into_iter()
        .take(top)
        .map(|(identity, score, column)| {
            json!({ "identity": identity, "score": score, "column": column, "translation": result.translation(column) })
        })
        .collect();
    print_json(&json!({
        "mode": args.mode,
        "decided": result.decided_class,
        "score": result.best_score(),
        "tie": result.tie,
        "ranked": ranked,
    }))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(args: &MatchArgs, claim: &str, threshold: u32) -> Result<ExitCode> {
    let (table, query) = load_query(args)?;
    let v = matcher::verify(&query, &table, claim, threshold, args.mode)?;
    print_json(&json!({ "claim": claim, "threshold": threshold, "mode": args.mode, "result": v }))?;
    Ok(if v.accepted { ExitCode::SUCCESS } else { ExitCode::from(EXIT_REJECT) })
}

pub struct EvalOptions {
    pub protocols: Vec<Protocol>,
    pub mode: Mode,
    pub folds: usize,
    pub seed: u64,
    pub sweep: bool,
}

/// One point of a one-at-a-time parameter sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub parameter: String,
    pub value: String,
    pub eer: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: Config,
    pub config_hash: String,
    pub identities: usize,
    pub samples: usize,
    pub protocols: Vec<ProtocolReport>,
    pub cmc: Option<CmcReport>,
    pub seed: u64,
    pub sweep: Vec<SweepPoint>,
}

fn fused_eer(pipeline: &Pipeline, samples: &[(Entry, RoiSet)], protocol: Protocol, mode: Mode) -> Result<f64> {
    let (table, queries) = eval::enroll_all(pipeline, samples)?;
    let sets = eval::run_protocol(&table, &queries, protocol, mode)?;
    let eers = sets.iter().map(|s| s.roc().map(|r| r.eer)).collect::<Result<Vec<_>>>()?;
    Ok(eers.iter().sum::<f64>() / eers.len() as f64)
}

fn resized(samples: &[(Entry, RoiSet)], side: usize) -> Result<Vec<(Entry, RoiSet)>> {
    samples
        .iter()
        .map(|(e, s)| {
            let bands = s.bands.iter().map(|b| resize_bicubic(b, side, side)).collect();
            Ok((e.clone(), RoiSet::with_labels(bands, s.band_labels.clone())?))
        })
        .collect()
}

pub fn evaluate(samples: &[(Entry, RoiSet)], cfg: &Config, opts: &EvalOptions) -> Result<EvalReport> {
    let pipeline = cfg.pipeline()?;
    let (table, queries) = eval::enroll_all(&pipeline, samples)?;
    let mut protocols = Vec::new();
    for &p in &opts.protocols {
        for set in eval::run_protocol(&table, &queries, p, opts.mode)? {
            protocols.push(ProtocolReport::new(&set)?);
        }
    }
    let cmc = if opts.folds > 0 { Some(eval::cmc(&table, &queries, opts.mode, opts.folds, opts.seed)?) } else { None };
    let mut sweep = Vec::new();
    if opts.sweep {
        let protocol = opts.protocols.first().copied().unwrap_or(Protocol::Exp5);
        for side in [16, 32, 64, 128] {
            let eer = fused_eer(&pipeline, &resized(samples, side)?, protocol, opts.mode)?;
            sweep.push(SweepPoint { parameter: "roi".into(), value: side.to_string(), eer });
        }
        for k in [2, 3, 4] {
            let p = Pipeline { bank: FilterBank::for_order(k), ..pipeline.clone() };
            let eer = fused_eer(&p, samples, protocol, opts.mode)?;
            sweep.push(SweepPoint { parameter: "k".into(), value: k.to_string(), eer });
        }
        for blur in [Neighborhood::None, Neighborhood::Four, Neighborhood::Eight] {
            let p = Pipeline { blur, ..pipeline.clone() };
            let eer = fused_eer(&p, samples, protocol, opts.mode)?;
            sweep.push(SweepPoint { parameter: "blur".into(), value: blur.to_string(), eer });
        }
    }
    let (w, h) = samples[0].1.bands[0].dims();
    Ok(EvalReport {
        config: Config { mode: opts.mode, roi_side: w, ..cfg.clone() },
        config_hash: pipeline.config_hash(w, h),
        identities: table.identities().len(),
        samples: samples.len(),
        protocols,
        cmc,
        seed: opts.seed,
        sweep,
    })
}

fn cmd_eval(root: &Path, report: Option<&Path>, cfg: &Config, opts: &EvalOptions) -> Result<ExitCode> {
    let samples = Corpus::load(root)?.load_rois(root)?;
    if samples.is_empty() {
        return Err(PalmError::EmptyGallery);
    }
    let r = evaluate(&samples, cfg, opts)?;
    match report {
        Some(path) => {
            write_json(path, &r)?;
            let summary: Vec<_> = r
                .protocols
                .iter()
                .map(|p| json!({ "protocol": p.protocol, "band": p.band, "eer_percent": p.eer_percent, "gar_at_far_0_1": p.gar_at_far_0_1 }))
                .collect();
            let rank1 = r.cmc.as_ref().map(|c| c.rank1_mean);
            print_json(&json!({ "report": path, "protocols": summary, "rank1": rank1 }))?;
        }
        None => print_json(&r)?,
    }
    Ok(ExitCode::SUCCESS)
}

/// Throughput measurements. A match scores one query band against one
/// gallery column band over the whole translation window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub columns: usize,
    pub queries: usize,
    pub bands: usize,
    pub translations: usize,
    pub threads: usize,
    pub matches_per_sec_per_band_single: f64,
    pub matches_per_sec_per_band_multi: f64,
    pub extraction_ms_per_band: f64,
    pub bytes_per_band: usize,
}

/// Gallery of `columns` columns cycling through a small pool of synthetic
/// samples, plus `queries` fresh samples of the same identities.
fn bench_gallery(columns: usize, queries: usize, bands: usize, seed: u64) -> Result<(HashTable, Vec<Vec<ContourCode>>, f64)> {
    let pipeline = Pipeline::default();
    let pool_ids = columns.clamp(1, 64);
    let corpus = synth::roi_corpus(pool_ids, 2, bands, seed)?;
    let start = Instant::now();
    let codes: Vec<Vec<ContourCode>> = corpus.iter().map(|(_, s)| pipeline.codes(s)).collect::<Result<_>>()?;
    let maps = codes
        .iter()
        .map(|c| c.iter().map(|b| pipeline.gallery_map(b)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let ms_per_band = start.elapsed().as_secs_f64() * 1e3 / (corpus.len() * bands) as f64;
    let mut table = HashTable::new(&pipeline, ROI_SIDE, ROI_SIDE, band_labels(bands))?;
    for c in 0..columns {
        let i = c % pool_ids;
        table.push_maps(&maps[2 * i], Entry::new(format!("col{c}"), 0, 1))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probes = (0..queries).map(|_| codes[2 * rng.random_range(0..pool_ids) + 1].clone()).collect();
    Ok((table, probes, ms_per_band))
}

pub fn bench(gallery: Option<&Path>, columns: usize, queries: usize, bands: usize, seed: u64) -> Result<BenchReport> {
    let (table, probes, extraction_ms_per_band) = match gallery {
        Some(path) => {
            let table = HashTable::load(path)?;
            let (_, probes, ms) = bench_gallery(1, queries, table.bands(), seed)?;
            (table, probes, ms)
        }
        None => bench_gallery(columns, queries, bands, seed)?,
    };
    let queries: Vec<Query> = probes.iter().map(|c| Query::new(c, table.manifest())).collect::<Result<_>>()?;
    let b = table.bands();
    let s_len = matcher::shift_order(table.manifest().t_x, table.manifest().t_y).len();
    let all: Vec<usize> = (0..table.columns()).collect();
    let work = (queries.len() * table.columns() * b) as f64;
    let rate = |secs: f64| if work > 0.0 && secs > 0.0 { work / secs } else { 0.0 };

    let start = Instant::now();
    let mut buf = vec![0u32; b * s_len];
    let mut sink = 0u64;
    for q in &queries {
        for c in 0..table.columns() {
            column_scores(q, &table, c, &mut buf);
            sink = sink.wrapping_add(buf.iter().copied().max().unwrap_or(0) as u64);
        }
    }
    let single = rate(start.elapsed().as_secs_f64());
    std::hint::black_box(sink);

    let start = Instant::now();
    for q in &queries {
        std::hint::black_box(matcher::match_columns(q, &table, &all, Mode::Atm, true));
    }
    let multi = rate(start.elapsed().as_secs_f64());

    let m = table.manifest();
    Ok(BenchReport {
        columns: table.columns(),
        queries: queries.len(),
        bands: b,
        translations: s_len,
        threads: rayon::current_num_threads(),
        matches_per_sec_per_band_single: single,
        matches_per_sec_per_band_multi: multi,
        extraction_ms_per_band,
        bytes_per_band: m.rows_per_band().div_ceil(8),
    })
}
