//! The enrolled hash table: one column per gallery sample, rows are the
//! `2^k * m' * n'` bins of every band stacked vertically.
//!
//! Row `b * R + (y * m' + x) * 2^k + (i - 1)` holds bin `i` of band `b` at
//! `(x, y)`, with `R = 2^k * m' * n'`. Storage is column-major so a gallery
//! sample is contiguous; each band slice is padded to whole `u64` words in
//! memory and packed without padding on disk.
//!
//! File layout (`*.pcg`): magic `PCGT`, `u32` version, `u64` manifest
//! length, manifest JSON, then every column as `ceil(B * R / 8)` bytes,
//! bits LSB-first. All integers little-endian.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::contourcode::{BinaryCodeMap, ContourCode, Neighborhood};
use crate::error::{PalmError, Result};
use crate::pipeline::Pipeline;
use crate::roi::RoiSet;

pub const MAGIC: &[u8; 4] = b"PCGT";
pub const VERSION: u32 = 1;

/// Provenance of one gallery column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entry {
    pub identity: String,
    pub sample: u32,
    pub session: u8,
}

impl Entry {
    pub fn new(identity: impl Into<String>, sample: u32, session: u8) -> Self {
        Self { identity: identity.into(), sample, session }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GalleryManifest {
    pub version: u32,
    pub k: u32,
    pub m_prime: usize,
    pub n_prime: usize,
    pub t_x: usize,
    pub t_y: usize,
    pub bands: usize,
    pub band_labels: Vec<String>,
    pub blur: Neighborhood,
    pub filter_bank: String,
    /// Hash of the encoding parameters, see [`Pipeline::config_hash`].
    pub config_hash: String,
    pub band_row_offsets: Vec<usize>,
    pub entries: Vec<Entry>,
}

impl GalleryManifest {
    /// Rows per band, `2^k * m' * n'`.
    pub fn rows_per_band(&self) -> usize {
        (self.m_prime * self.n_prime) << self.k
    }

    pub fn total_rows(&self) -> usize {
        self.bands * self.rows_per_band()
    }

    /// Full code-map size the central window was cropped from.
    pub fn code_dims(&self) -> (usize, usize) {
        (self.m_prime + 2 * self.t_x, self.n_prime + 2 * self.t_y)
    }

    fn check_pipeline(&self, p: &Pipeline) -> Result<()> {
        let mut diffs = Vec::new();
        if p.k() != self.k {
            diffs.push(format!("k {} vs {}", p.k(), self.k));
        }
        if (p.tx, p.ty) != (self.t_x, self.t_y) {
            diffs.push(format!("margins ({}, {}) vs ({}, {})", p.tx, p.ty, self.t_x, self.t_y));
        }
        if p.blur != self.blur {
            diffs.push(format!("blur {} vs {}", p.blur, self.blur));
        }
        if p.bank.id() != self.filter_bank {
            diffs.push(format!("filter bank {} vs {}", p.bank.id(), self.filter_bank));
        }
        let (w, h) = self.code_dims();
        if diffs.is_empty() && p.config_hash(w, h) != self.config_hash {
            diffs.push(format!("config hash {} vs {}", p.config_hash(w, h), self.config_hash));
        }
        if diffs.is_empty() {
            Ok(())
        } else {
            Err(PalmError::ParamMismatch(format!("pipeline differs from gallery: {}", diffs.join(", "))))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashTable {
    manifest: GalleryManifest,
    band_words: usize,
    words: Vec<u64>,
}

impl HashTable {
    /// Empty table for ROIs of `roi_width x roi_height` encoded by `pipeline`.
    pub fn new(pipeline: &Pipeline, roi_width: usize, roi_height: usize, band_labels: Vec<String>) -> Result<Self> {
        let (tx, ty) = (pipeline.tx, pipeline.ty);
        if 2 * tx >= roi_width || 2 * ty >= roi_height {
            return Err(PalmError::CropTooLarge { tx, ty, width: roi_width, height: roi_height });
        }
        if band_labels.is_empty() {
            return Err(PalmError::Dimension("gallery needs at least one band".into()));
        }
        let k = pipeline.k();
        let (m_prime, n_prime) = (roi_width - 2 * tx, roi_height - 2 * ty);
        let rows = (m_prime * n_prime) << k;
        let bands = band_labels.len();
        let manifest = GalleryManifest {
            version: VERSION,
            k,
            m_prime,
            n_prime,
            t_x: tx,
            t_y: ty,
            bands,
            band_labels,
            blur: pipeline.blur,
            filter_bank: pipeline.bank.id(),
            config_hash: pipeline.config_hash(roi_width, roi_height),
            band_row_offsets: (0..bands).map(|b| b * rows).collect(),
            entries: Vec::new(),
        };
        Ok(Self::from_manifest(manifest))
    }

    fn from_manifest(manifest: GalleryManifest) -> Self {
        let band_words = manifest.rows_per_band().div_ceil(64);
        Self { manifest, band_words, words: Vec::new() }
    }

    pub fn manifest(&self) -> &GalleryManifest {
        &self.manifest
    }

    pub fn entries(&self) -> &[Entry] {
        &self.manifest.entries
    }

    pub fn columns(&self) -> usize {
        self.manifest.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns() == 0
    }

    pub fn bands(&self) -> usize {
        self.manifest.bands
    }

    /// `u64` words per band slice of one column (zero-padded).
    pub fn band_words(&self) -> usize {
        self.band_words
    }

    /// Words of band `b` in column `c`.
    #[inline]
    pub fn column_band(&self, c: usize, b: usize) -> &[u64] {
        let start = (c * self.manifest.bands + b) * self.band_words;
        &self.words[start..start + self.band_words]
    }

    /// All band slices of column `c`, back to back.
    #[inline]
    pub fn column(&self, c: usize) -> &[u64] {
        let len = self.manifest.bands * self.band_words;
        &self.words[c * len..(c + 1) * len]
    }

    /// Bit at stacked row `row` of column `c`.
    pub fn get(&self, c: usize, row: usize) -> bool {
        let rows = self.manifest.rows_per_band();
        let (b, r) = (row / rows, row % rows);
        self.column_band(c, b)[r / 64] >> (r % 64) & 1 == 1
    }

    /// Stacked row index of bin `i` (1-based) of band `b` at `(x, y)`.
    pub fn row_of(&self, b: usize, x: usize, y: usize, i: usize) -> usize {
        let m = &self.manifest;
        m.band_row_offsets[b] + ((y * m.m_prime + x) << m.k) + i - 1
    }

    /// Columns enrolled under `identity`.
    pub fn columns_of(&self, identity: &str) -> Vec<usize> {
        self.entries()
            .iter()
            .enumerate()
            .filter(|(_, e)| e.identity == identity)
            .map(|(c, _)| c)
            .collect()
    }

    /// Distinct identities in first-enrollment order.
    pub fn identities(&self) -> Vec<&str> {
        let mut seen = Vec::<&str>::new();
        for e in self.entries() {
            if !seen.contains(&e.identity.as_str()) {
                seen.push(&e.identity);
            }
        }
        seen
    }

    /// Appends one column of already-encoded gallery maps.
    pub fn push_maps(&mut self, maps: &[BinaryCodeMap], entry: Entry) -> Result<usize> {
        let m = &self.manifest;
        if maps.len() != m.bands {
            return Err(PalmError::ParamMismatch(format!(
                "sample has {} bands, gallery has {}",
                maps.len(),
                m.bands
            )));
        }
        let want_blur = m.blur != Neighborhood::None;
        for (b, map) in maps.iter().enumerate() {
            if (map.width(), map.height(), map.k()) != (m.m_prime, m.n_prime, m.k) {
                return Err(PalmError::ParamMismatch(format!(
                    "band {b} code is {}x{} with k={}, gallery expects {}x{} with k={}",
                    map.width(),
                    map.height(),
                    map.k(),
                    m.m_prime,
                    m.n_prime,
                    m.k
                )));
            }
            if map.is_blurred() != want_blur {
                return Err(PalmError::ParamMismatch(format!("band {b} blur state differs from gallery")));
            }
        }
        for map in maps {
            self.words.extend_from_slice(map.words());
        }
        self.manifest.entries.push(entry);
        Ok(self.columns() - 1)
    }

    /// Blurs and appends full band codes.
    pub fn push_codes(&mut self, codes: &[ContourCode], entry: Entry, pipeline: &Pipeline) -> Result<usize> {
        self.manifest.check_pipeline(pipeline)?;
        let dims = self.manifest.code_dims();
        if let Some(c) = codes.iter().find(|c| (c.width(), c.height()) != dims) {
            return Err(PalmError::ParamMismatch(format!(
                "code map is {}x{}, gallery expects {}x{}",
                c.width(),
                c.height(),
                dims.0,
                dims.1
            )));
        }
        let maps = codes.iter().map(|c| pipeline.gallery_map(c)).collect::<Result<Vec<_>>>()?;
        self.push_maps(&maps, entry)
    }

    /// Decomposes, encodes, crops, blurs and appends every band of `rois`.
    pub fn enroll(&mut self, rois: &RoiSet, entry: Entry, pipeline: &Pipeline) -> Result<usize> {
        if rois.band_count() != self.manifest.bands {
            return Err(PalmError::ParamMismatch(format!(
                "sample has {} bands, gallery has {}",
                rois.band_count(),
                self.manifest.bands
            )));
        }
        self.manifest.check_pipeline(pipeline)?;
        let codes = pipeline.codes(rois)?;
        self.push_codes(&codes, entry, pipeline)
    }

    fn column_bytes(&self) -> usize {
        self.manifest.total_rows().div_ceil(8)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let manifest = serde_json::to_vec(&self.manifest)?;
        let rows = self.manifest.rows_per_band();
        let col_bytes = self.column_bytes();
        let mut out = Vec::with_capacity(16 + manifest.len() + self.columns() * col_bytes);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(&manifest);
        for c in 0..self.columns() {
            let base = out.len();
            out.resize(base + col_bytes, 0);
            let col = &mut out[base..];
            for b in 0..self.manifest.bands {
                let offset = b * rows;
                for (w, &word) in self.column_band(c, b).iter().enumerate() {
                    let mut bits = word;
                    while bits != 0 {
                        let r = offset + w * 64 + bits.trailing_zeros() as usize;
                        col[r / 8] |= 1 << (r % 8);
                        bits &= bits - 1;
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let truncated = || PalmError::Format("gallery file is truncated".into());
        if bytes.len() < 16 {
            return Err(truncated());
        }
        if &bytes[..4] != MAGIC {
            return Err(PalmError::Format("missing PCGT magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(PalmError::Version { found: version, expected: VERSION });
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        let end = usize::try_from(len).ok().and_then(|l| l.checked_add(16)).ok_or_else(truncated)?;
        let json = bytes.get(16..end).ok_or_else(truncated)?;
        let mut manifest: GalleryManifest = serde_json::from_slice(json)
            .map_err(|e| PalmError::Format(format!("bad gallery manifest: {e}")))?;
        if manifest.version != VERSION {
            return Err(PalmError::Version { found: manifest.version, expected: VERSION });
        }
        let rows = manifest.rows_per_band();
        if manifest.bands == 0
            || manifest.band_labels.len() != manifest.bands
            || manifest.band_row_offsets != (0..manifest.bands).map(|b| b * rows).collect::<Vec<_>>()
        {
            return Err(PalmError::Format("inconsistent band layout in manifest".into()));
        }
        let entries = std::mem::take(&mut manifest.entries);
        let mut table = Self::from_manifest(manifest);
        let col_bytes = table.column_bytes();
        let body = &bytes[end..];
        if body.len() != entries.len() * col_bytes {
            return Err(if body.len() < entries.len() * col_bytes {
                truncated()
            } else {
                PalmError::Format("trailing bytes after bit matrix".into())
            });
        }
        let bands = table.manifest.bands;
        table.words = vec![0; entries.len() * bands * table.band_words];
        for (c, col) in body.chunks(col_bytes).enumerate() {
            for (i, &byte) in col.iter().enumerate() {
                let mut bits = byte;
                while bits != 0 {
                    let r = i * 8 + bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    if r >= bands * rows {
                        return Err(PalmError::Format("nonzero padding bits in column".into()));
                    }
                    let (b, rr) = (r / rows, r % rows);
                    table.words[(c * bands + b) * table.band_words + rr / 64] |= 1 << (rr % 64);
                }
            }
        }
        table.manifest.entries = entries;
        Ok(table)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes = self.to_bytes()?;
        let path = path.as_ref();
        let tmp = path.with_extension("pcg.tmp");
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::GrayImage;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_codes(rng: &mut ChaCha8Rng, bands: usize) -> Vec<ContourCode> {
        (0..bands)
            .map(|_| {
                let codes = (0..32 * 32).map(|_| rng.random_range(1..=8u8)).collect();
                ContourCode::new(32, 32, 3, codes).unwrap()
            })
            .collect()
    }

    fn labels(b: usize) -> Vec<String> {
        (0..b).map(|i| format!("band{i}")).collect()
    }

    fn table_with(columns: usize, seed: u64) -> HashTable {
        let p = Pipeline::default();
        let mut t = HashTable::new(&p, 32, 32, labels(4)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for c in 0..columns {
            t.push_codes(&random_codes(&mut rng, 4), Entry::new(format!("id{}", c / 3), c as u32, 1), &p)
                .unwrap();
        }
        t
    }

    #[test]
    fn rows_for_four_bands() {
        let t = table_with(1, 0);
        assert_eq!(t.manifest().rows_per_band(), 5408);
        assert_eq!(t.manifest().total_rows(), 21632);
        assert_eq!(t.manifest().band_row_offsets, vec![0, 5408, 10816, 16224]);
        assert_eq!(t.band_words(), 85);
    }

    #[test]
    fn enroll_twice_gives_identical_columns() {
        let p = Pipeline::default();
        let band = GrayImage::from_fn(32, 32, |x, y| ((x * 7 + y * 13) % 256) as u8);
        let rois = RoiSet::from_bands(vec![band.clone(), band.flip_horizontal()]).unwrap();
        let mut t = HashTable::new(&p, 32, 32, labels(2)).unwrap();
        t.enroll(&rois, Entry::new("a", 0, 1), &p).unwrap();
        t.enroll(&rois, Entry::new("a", 1, 1), &p).unwrap();
        assert_eq!(t.column(0), t.column(1));
        let three = RoiSet::from_bands(vec![band.clone(), band.clone(), band]).unwrap();
        assert!(matches!(t.enroll(&three, Entry::new("a", 2, 1), &p), Err(PalmError::ParamMismatch(_))));
        let other = Pipeline { blur: Neighborhood::Eight, ..Pipeline::default() };
        assert!(matches!(t.enroll(&rois, Entry::new("a", 2, 1), &other), Err(PalmError::ParamMismatch(_))));
        assert_eq!(t.columns(), 2);
    }

    #[test]
    fn row_layout_self_test() {
        let p = Pipeline::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let (b, x, y, i) = (
                rng.random_range(0..4),
                rng.random_range(0..26),
                rng.random_range(0..26),
                rng.random_range(1..=8usize),
            );
            // a uniform code of bin i sets exactly one row per location
            let codes: Vec<ContourCode> = (0..4)
                .map(|bb| ContourCode::uniform(32, 32, 3, if bb == b { i as u8 } else { 1 }).unwrap())
                .collect();
            let mut t = HashTable::new(&p, 32, 32, labels(4)).unwrap();
            t.push_codes(&codes, Entry::new("x", 0, 1), &p).unwrap();
            let row = t.row_of(b, x, y, i);
            assert_eq!(row, b * 5408 + (y * 26 + x) * 8 + i - 1);
            assert!(t.get(0, row));
            let back = HashTable::from_bytes(&t.to_bytes().unwrap()).unwrap();
            assert!(back.get(0, row));
            if i != 1 {
                assert!(!back.get(0, t.row_of(b, x, y, 1)));
            }
        }
    }

    #[test]
    fn save_load_round_trip() {
        let t = table_with(7, 3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.pcg");
        t.save(&path).unwrap();
        let back = HashTable::load(&path).unwrap();
        assert_eq!(back, t);
        let empty = HashTable::new(&Pipeline::default(), 32, 32, labels(1)).unwrap();
        assert_eq!(HashTable::from_bytes(&empty.to_bytes().unwrap()).unwrap(), empty);
    }

    #[test]
    fn unaligned_rows_round_trip() {
        // 5x5 window, k=3 -> 200 rows, not a multiple of 64
        let p = Pipeline { tx: 2, ty: 2, ..Pipeline::default() };
        let mut t = HashTable::new(&p, 9, 9, labels(3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for c in 0..5 {
            let codes: Vec<ContourCode> = (0..3)
                .map(|_| ContourCode::new(9, 9, 3, (0..81).map(|_| rng.random_range(1..=8)).collect()).unwrap())
                .collect();
            t.push_codes(&codes, Entry::new("u", c, 2), &p).unwrap();
        }
        assert_eq!(HashTable::from_bytes(&t.to_bytes().unwrap()).unwrap(), t);
    }

    #[test]
    fn corrupt_files_rejected() {
        let bytes = table_with(2, 9).to_bytes().unwrap();
        for cut in [3, 15, 40, bytes.len() - 1] {
            assert!(matches!(HashTable::from_bytes(&bytes[..cut]), Err(PalmError::Format(_))), "cut {cut}");
        }
        let mut bumped = bytes.clone();
        bumped[4..8].copy_from_slice(&2u32.to_le_bytes());
        let err = HashTable::from_bytes(&bumped).unwrap_err();
        assert!(matches!(err, PalmError::Version { found: 2, expected: 1 }));
        let msg = err.to_string();
        assert!(msg.contains('2') && msg.contains('1'), "{msg}");
        let mut magic = bytes;
        magic[0] = b'X';
        assert!(matches!(HashTable::from_bytes(&magic), Err(PalmError::Format(_))));
    }

    #[test]
    fn identity_helpers() {
        let t = table_with(7, 1);
        assert_eq!(t.columns_of("id1"), vec![3, 4, 5]);
        assert_eq!(t.identities(), vec!["id0", "id1", "id2"]);
        assert!(t.columns_of("nobody").is_empty());
    }
}
