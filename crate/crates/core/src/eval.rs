//! Session protocols, ROC/EER, CMC identification and ROI accuracy metrics.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contourcode::ContourCode;
use crate::error::{PalmError, Result};
use crate::gallery::{Entry, HashTable};
use crate::matcher::{column_scores, match_columns, Mode, Query};
use crate::pipeline::Pipeline;
use crate::roi::{Landmarks, RoiSet};

/// Session pairing protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// Every band on its own, all vs all.
    Exp1,
    /// Session 1 vs session 1.
    Exp2,
    /// Session 2 vs session 2.
    Exp3,
    /// Session 1 vs session 2.
    Exp4,
    /// Fused bands, all vs all.
    Exp5,
}

impl Protocol {
    pub const ALL: [Protocol; 5] = [Protocol::Exp1, Protocol::Exp2, Protocol::Exp3, Protocol::Exp4, Protocol::Exp5];

    /// Whether samples `a` and `b` (sessions) are paired.
    fn admits(self, sa: u8, sb: u8) -> bool {
        match self {
            Protocol::Exp1 | Protocol::Exp5 => true,
            Protocol::Exp2 => sa == 1 && sb == 1,
            Protocol::Exp3 => sa == 2 && sb == 2,
            Protocol::Exp4 => sa != sb && (sa == 1 || sb == 1) && (sa == 2 || sb == 2),
        }
    }

    fn sessions_needed(self) -> &'static [u8] {
        match self {
            Protocol::Exp1 | Protocol::Exp5 => &[],
            Protocol::Exp2 => &[1],
            Protocol::Exp3 => &[2],
            Protocol::Exp4 => &[1, 2],
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = Protocol::ALL.iter().position(|p| p == self).unwrap_or(0) + 1;
        write!(f, "exp{n}")
    }
}

impl FromStr for Protocol {
    type Err = PalmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().trim_start_matches("exp").trim_start_matches('.') {
            "1" => Ok(Protocol::Exp1),
            "2" => Ok(Protocol::Exp2),
            "3" => Ok(Protocol::Exp3),
            "4" => Ok(Protocol::Exp4),
            "5" => Ok(Protocol::Exp5),
            _ => Err(PalmError::Format(format!("unknown protocol `{s}`, expected exp1..exp5"))),
        }
    }
}

/// Visits every unordered pair `(a, b)`, `a < b`, admitted by `protocol`;
/// `a` is the enrolled side. The flag marks genuine pairs.
pub fn for_each_pair(entries: &[Entry], protocol: Protocol, mut f: impl FnMut(usize, usize, bool)) -> Result<()> {
    for &s in protocol.sessions_needed() {
        if !entries.iter().any(|e| e.session == s) {
            return Err(PalmError::MissingSession(s));
        }
    }
    let ids = identity_indices(entries);
    for b in 1..entries.len() {
        for a in 0..b {
            if protocol.admits(entries[a].session, entries[b].session) {
                f(a, b, ids[a] == ids[b]);
            }
        }
    }
    Ok(())
}

fn identity_indices(entries: &[Entry]) -> Vec<usize> {
    let mut map = HashMap::new();
    entries
        .iter()
        .map(|e| {
            let n = map.len();
            *map.entry(e.identity.as_str()).or_insert(n)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    pub genuine: u64,
    pub imposter: u64,
}

/// Counts pairs by enumeration.
pub fn count_pairs(entries: &[Entry], protocol: Protocol) -> Result<PairCounts> {
    let mut c = PairCounts { genuine: 0, imposter: 0 };
    for_each_pair(entries, protocol, |_, _, g| if g { c.genuine += 1 } else { c.imposter += 1 })?;
    Ok(c)
}

/// Closed-form counts for `ids` identities with `samples` each, the first
/// half of every identity's samples in session 1. Exp1 counts are per band.
pub fn closed_form_counts(ids: u64, samples: u64, protocol: Protocol) -> PairCounts {
    let pairs = |n: u64| n * n.saturating_sub(1) / 2;
    let s1 = samples / 2;
    let s2 = samples - s1;
    let within = |s: u64| PairCounts { genuine: ids * pairs(s), imposter: pairs(ids * s) - ids * pairs(s) };
    match protocol {
        Protocol::Exp1 | Protocol::Exp5 => within(samples),
        Protocol::Exp2 => within(s1),
        Protocol::Exp3 => within(s2),
        Protocol::Exp4 => PairCounts { genuine: ids * s1 * s2, imposter: ids * s1 * ids * s2 - ids * s1 * s2 },
    }
}

/// Genuine and imposter scores of one protocol run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub protocol: Protocol,
    pub mode: Mode,
    /// Band index for single-band (Exp1) score sets.
    pub band: Option<usize>,
    pub genuine: Vec<u32>,
    pub imposter: Vec<u32>,
}

impl ScoreSet {
    pub fn counts(&self) -> PairCounts {
        PairCounts { genuine: self.genuine.len() as u64, imposter: self.imposter.len() as u64 }
    }
}

/// Enrolls every sample in order and builds its query; column `i` and
/// `queries[i]` come from `samples[i]`.
pub fn enroll_all(pipeline: &Pipeline, samples: &[(Entry, RoiSet)]) -> Result<(HashTable, Vec<Query>)> {
    let Some((_, first)) = samples.first() else {
        return Err(PalmError::EmptyGallery);
    };
    let (w, h) = first.bands[0].dims();
    let mut table = HashTable::new(pipeline, w, h, first.band_labels.clone())?;
    let codes: Vec<Vec<ContourCode>> = samples.par_iter().map(|(_, set)| pipeline.codes(set)).collect::<Result<_>>()?;
    for ((entry, _), c) in samples.iter().zip(&codes) {
        table.push_codes(c, entry.clone(), pipeline)?;
    }
    let queries = codes.par_iter().map(|c| Query::new(c, table.manifest())).collect::<Result<_>>()?;
    Ok((table, queries))
}

/// Scores every protocol pair; `queries[i]` must be the query of column
/// `i`. Exp1 yields one score set per band, the others a single fused set.
pub fn run_protocol(table: &HashTable, queries: &[Query], protocol: Protocol, mode: Mode) -> Result<Vec<ScoreSet>> {
    if queries.len() != table.columns() {
        return Err(PalmError::ParamMismatch(format!(
            "{} queries for {} gallery columns",
            queries.len(),
            table.columns()
        )));
    }
    let mut plan: Vec<Vec<(usize, bool)>> = vec![Vec::new(); table.columns()];
    for_each_pair(table.entries(), protocol, |a, b, g| plan[b].push((a, g)))?;
    let bands = table.bands();
    let per_band = protocol == Protocol::Exp1;
    let sets = if per_band { bands } else { 1 };

    // (set, genuine, score) per probe, reduced in probe order
    let rows: Vec<Vec<(usize, bool, u32)>> = plan
        .par_iter()
        .enumerate()
        .map(|(b, pairs)| {
            let q = &queries[b];
            let s_len = q.shifts().len();
            let mut buf = vec![0u32; bands * s_len];
            let mut out = Vec::with_capacity(pairs.len() * sets);
            for &(a, g) in pairs {
                if per_band {
                    column_scores(q, table, a, &mut buf);
                    for band in 0..bands {
                        let best = buf[band * s_len..(band + 1) * s_len].iter().max().copied().unwrap_or(0);
                        out.push((band, g, best));
                    }
                } else {
                    let (scores, _) = match_columns(q, table, &[a], mode, false);
                    out.push((0, g, scores[0]));
                }
            }
            out
        })
        .collect();

    let mut result: Vec<ScoreSet> = (0..sets)
        .map(|s| ScoreSet {
            protocol,
            mode,
            band: per_band.then_some(s),
            genuine: Vec::new(),
            imposter: Vec::new(),
        })
        .collect();
    for (set, g, score) in rows.into_iter().flatten() {
        if g {
            result[set].genuine.push(score);
        } else {
            result[set].imposter.push(score);
        }
    }
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Accept iff score >= threshold.
    pub threshold: u32,
    pub far: f64,
    pub frr: f64,
    pub gar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Roc {
    /// Ascending thresholds.
    pub points: Vec<RocPoint>,
    pub eer: f64,
    /// Interpolated threshold at the EER.
    pub eer_threshold: f64,
    /// Best GAR with FAR <= 0.1%.
    pub gar_at_far_0_1: f64,
}

impl Roc {
    /// At most `n` points, evenly spaced over the sweep, endpoints kept.
    pub fn sampled(&self, n: usize) -> Vec<RocPoint> {
        let len = self.points.len();
        if len <= n || n < 2 {
            return self.points.clone();
        }
        (0..n).map(|i| self.points[i * (len - 1) / (n - 1)]).collect()
    }

    /// Integer threshold nearest the EER crossing (for verification).
    pub fn eer_operating_threshold(&self) -> u32 {
        self.eer_threshold.ceil() as u32
    }
}

fn rates_at(sorted_gen: &[u32], sorted_imp: &[u32], t: u32) -> (f64, f64) {
    let far = (sorted_imp.len() - sorted_imp.partition_point(|&s| s < t)) as f64 / sorted_imp.len() as f64;
    let frr = sorted_gen.partition_point(|&s| s < t) as f64 / sorted_gen.len() as f64;
    (far, frr)
}

/// Threshold sweep over every distinct score (plus one past the maximum).
pub fn roc(genuine: &[u32], imposter: &[u32]) -> Result<Roc> {
    if genuine.is_empty() || imposter.is_empty() {
        return Err(PalmError::EmptyScores);
    }
    let mut g = genuine.to_vec();
    let mut i = imposter.to_vec();
    g.sort_unstable();
    i.sort_unstable();
    let mut thresholds: Vec<u32> = g.iter().chain(&i).copied().collect();
    thresholds.sort_unstable();
    thresholds.dedup();
    thresholds.push(thresholds[thresholds.len() - 1] + 1);
    let points: Vec<RocPoint> = thresholds
        .iter()
        .map(|&t| {
            let (far, frr) = rates_at(&g, &i, t);
            RocPoint { threshold: t, far, frr, gar: 1.0 - frr }
        })
        .collect();
    let (eer, eer_threshold) = eer_of(&points);
    let gar_at_far_0_1 = points.iter().filter(|p| p.far <= 1e-3).map(|p| p.gar).fold(0.0, f64::max);
    Ok(Roc { points, eer, eer_threshold, gar_at_far_0_1 })
}

/// EER by linear interpolation where FAR - FRR changes sign.
fn eer_of(points: &[RocPoint]) -> (f64, f64) {
    let idx = points.iter().position(|p| p.far <= p.frr).expect("FRR reaches 1 past the top score");
    let p1 = points[idx];
    if idx == 0 || p1.far == p1.frr {
        return ((p1.far + p1.frr) / 2.0, p1.threshold as f64);
    }
    let p0 = points[idx - 1];
    let d0 = p0.far - p0.frr;
    let d1 = p1.far - p1.frr;
    let lambda = d0 / (d0 - d1);
    let eer = p0.far + lambda * (p1.far - p0.far);
    let t = p0.threshold as f64 + lambda * (p1.threshold as f64 - p0.threshold as f64);
    (eer, t)
}

impl ScoreSet {
    pub fn roc(&self) -> Result<Roc> {
        roc(&self.genuine, &self.imposter)
    }
}

/// Identification rate per rank, `rates[r - 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmcCurve {
    pub rates: Vec<f64>,
}

impl CmcCurve {
    /// Curve from 1-based ranks of the true identity among `gallery_ids`.
    pub fn from_ranks(ranks: &[usize], gallery_ids: usize) -> Self {
        let mut hits = vec![0usize; gallery_ids];
        for &r in ranks {
            if (1..=gallery_ids).contains(&r) {
                hits[r - 1] += 1;
            }
        }
        let mut acc = 0;
        let rates = hits
            .iter()
            .map(|h| {
                acc += h;
                if ranks.is_empty() {
                    0.0
                } else {
                    acc as f64 / ranks.len() as f64
                }
            })
            .collect();
        Self { rates }
    }

    pub fn rank1(&self) -> f64 {
        self.rates.first().copied().unwrap_or(0.0)
    }
}

/// 1-based rank of `truth` when identities are ordered by descending
/// score, ties by column. `scores` holds (identity, score, column).
pub fn rank_of(scores: &[(usize, u32, usize)], truth: usize) -> Option<usize> {
    let &(_, ts, tc) = scores.iter().find(|s| s.0 == truth)?;
    Some(1 + scores.iter().filter(|&&(id, s, c)| id != truth && (s > ts || (s == ts && c < tc))).count())
}

/// Ranks of each probe against the gallery columns.
pub fn identification_ranks(
    table: &HashTable,
    queries: &[Query],
    gallery: &[usize],
    probes: &[usize],
    mode: Mode,
) -> Vec<usize> {
    let ids = identity_indices(table.entries());
    probes
        .par_iter()
        .map(|&p| {
            let (scores, _) = match_columns(&queries[p], table, gallery, mode, false);
            let mut best: HashMap<usize, (u32, usize)> = HashMap::new();
            for (&c, &s) in gallery.iter().zip(&scores) {
                let slot = best.entry(ids[c]).or_insert((s, c));
                if s > slot.0 {
                    *slot = (s, c);
                }
            }
            let flat: Vec<(usize, u32, usize)> = best.into_iter().map(|(id, (s, c))| (id, s, c)).collect();
            rank_of(&flat, ids[p]).unwrap_or(usize::MAX)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmcReport {
    pub seed: u64,
    pub folds: Vec<CmcCurve>,
    pub mean: CmcCurve,
    pub rank1_mean: f64,
    pub rank1_std: f64,
}

/// Repeated random gallery selection: each fold enrolls one random sample
/// per identity and probes with the rest.
pub fn cmc(table: &HashTable, queries: &[Query], mode: Mode, folds: usize, seed: u64) -> Result<CmcReport> {
    if table.is_empty() {
        return Err(PalmError::EmptyGallery);
    }
    let ids = identity_indices(table.entries());
    let n_ids = ids.iter().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_ids];
    for (c, &id) in ids.iter().enumerate() {
        members[id].push(c);
    }
    if let Some(lonely) = members.iter().find(|m| m.len() < 2) {
        return Err(PalmError::InsufficientSamples(table.entries()[lonely[0]].identity.clone()));
    }
    let mut curves = Vec::with_capacity(folds);
    for fold in 0..folds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (fold as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let gallery: Vec<usize> = members.iter().map(|m| *m.choose(&mut rng).expect("nonempty")).collect();
        let probes: Vec<usize> = (0..table.columns()).filter(|c| !gallery.contains(c)).collect();
        let ranks = identification_ranks(table, queries, &gallery, &probes, mode);
        curves.push(CmcCurve::from_ranks(&ranks, n_ids));
    }
    let mean_rates = (0..n_ids)
        .map(|r| curves.iter().map(|c| c.rates[r]).sum::<f64>() / folds.max(1) as f64)
        .collect();
    let r1: Vec<f64> = curves.iter().map(CmcCurve::rank1).collect();
    let rank1_mean = r1.iter().sum::<f64>() / r1.len().max(1) as f64;
    let rank1_std = (r1.iter().map(|v| (v - rank1_mean).powi(2)).sum::<f64>() / r1.len().max(1) as f64).sqrt();
    Ok(CmcReport { seed, folds: curves, mean: CmcCurve { rates: mean_rates }, rank1_mean, rank1_std })
}

/// Extraction errors of automatic against reference landmarks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiAccuracy {
    /// Chebyshev error of P1..P3 in final-ROI pixels.
    pub e_loc: [f64; 3],
    /// Absolute rotation error, degrees.
    pub e_theta: f64,
    /// Percentage scale error.
    pub e_scale: f64,
}

/// Chebyshev landmark error in source pixels divided by `scale_factor`
/// (source pixels per ROI pixel).
pub fn localization_error(reference: crate::raster::Point, auto: crate::raster::Point, scale_factor: f64) -> f64 {
    reference.chebyshev(auto) / scale_factor
}

/// Absolute angle difference, wrapped to [0, 180].
pub fn rotation_error(theta_ref: f64, theta_auto: f64) -> f64 {
    let d = (theta_ref - theta_auto).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// `(max(w / w_bar, w_bar / w) - 1) * 100`.
pub fn scale_error(w: f64, w_bar: f64) -> f64 {
    ((w / w_bar).max(w_bar / w) - 1.0) * 100.0
}

/// `reference_width` is the reference palm width; the automatic width is
/// `auto.palm_width_bar`.
pub fn roi_accuracy(auto: &Landmarks, reference: &Landmarks, reference_width: f64, scale_factor: f64) -> RoiAccuracy {
    let e = |r, a| localization_error(r, a, scale_factor);
    RoiAccuracy {
        e_loc: [e(reference.p1, auto.p1), e(reference.p2, auto.p2), e(reference.p3, auto.p3)],
        e_theta: rotation_error(reference.theta, auto.theta),
        e_scale: scale_error(reference_width, auto.palm_width_bar),
    }
}

/// JSON report of one protocol run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub protocol: Protocol,
    pub mode: Mode,
    pub band: Option<usize>,
    pub counts: PairCounts,
    pub eer: f64,
    pub eer_percent: f64,
    pub eer_threshold: f64,
    pub gar_at_far_0_1: f64,
    pub roc: Vec<RocPoint>,
}

impl ProtocolReport {
    pub fn new(set: &ScoreSet) -> Result<Self> {
        let r = set.roc()?;
        Ok(Self {
            protocol: set.protocol,
            mode: set.mode,
            band: set.band,
            counts: set.counts(),
            eer: r.eer,
            eer_percent: r.eer * 100.0,
            eer_threshold: r.eer_threshold,
            gar_at_far_0_1: r.gar_at_far_0_1,
            roc: r.sampled(200),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Point;
    use proptest::prelude::*;
    use rand::Rng;

    fn corpus(ids: usize, samples: usize) -> Vec<Entry> {
        (0..ids)
            .flat_map(|i| {
                (0..samples).map(move |s| Entry::new(format!("id{i}"), s as u32, if s < samples / 2 { 1 } else { 2 }))
            })
            .collect()
    }

    #[test]
    fn hand_enumerated_pairs() {
        let c = count_pairs(&corpus(2, 2), Protocol::Exp5).unwrap();
        assert_eq!(c, PairCounts { genuine: 2, imposter: 4 });
    }

    #[test]
    fn table_three_counts() {
        let cases = [
            (500, 12, Protocol::Exp2, 7_500, 4_491_000),
            (500, 12, Protocol::Exp3, 7_500, 4_491_000),
            (500, 12, Protocol::Exp4, 18_000, 8_982_000),
            (500, 12, Protocol::Exp5, 33_000, 17_964_000),
            (500, 12, Protocol::Exp1, 33_000, 17_964_000),
            (200, 6, Protocol::Exp2, 600, 179_100),
            (200, 6, Protocol::Exp4, 1_800, 358_200),
            (200, 6, Protocol::Exp5, 3_000, 716_400),
        ];
        for (d, s, p, g, i) in cases {
            assert_eq!(closed_form_counts(d, s, p), PairCounts { genuine: g, imposter: i }, "{p} {d}x{s}");
        }
        for p in Protocol::ALL {
            assert_eq!(count_pairs(&corpus(200, 6), p).unwrap(), closed_form_counts(200, 6, p), "{p}");
        }
    }

    #[test]
    fn missing_session() {
        let one: Vec<Entry> = (0..4).map(|i| Entry::new(format!("{}", i / 2), i, 1)).collect();
        assert!(matches!(count_pairs(&one, Protocol::Exp3), Err(PalmError::MissingSession(2))));
        assert!(matches!(count_pairs(&one, Protocol::Exp4), Err(PalmError::MissingSession(2))));
        assert!(count_pairs(&one, Protocol::Exp2).is_ok());
    }

    proptest! {
        #[test]
        fn pair_counts_closed_form(d in 1u64..12, s in 1u64..9) {
            let entries = corpus(d as usize, s as usize);
            for p in Protocol::ALL {
                if let Ok(c) = count_pairs(&entries, p) {
                    prop_assert_eq!(c, closed_form_counts(d, s, p));
                }
            }
        }

        #[test]
        fn roc_monotone_and_bracketed(g in prop::collection::vec(0u32..60, 1..40), i in prop::collection::vec(0u32..60, 1..40)) {
            let r = roc(&g, &i).unwrap();
            for w in r.points.windows(2) {
                prop_assert!(w[1].far <= w[0].far && w[1].frr >= w[0].frr);
            }
            let idx = r.points.iter().position(|p| p.far <= p.frr).unwrap();
            let lo = if idx == 0 { 0 } else { idx - 1 };
            let (a, b) = (r.points[lo], r.points[idx]);
            let (mn, mx) = (a.far.min(b.far).min(a.frr.min(b.frr)), a.far.max(b.far).max(a.frr.max(b.frr)));
            prop_assert!(r.eer >= mn - 1e-12 && r.eer <= mx + 1e-12);
        }

        #[test]
        fn scale_error_symmetric(w in 1.0f64..500.0, wb in 1.0f64..500.0) {
            prop_assert!((scale_error(w, wb) - scale_error(wb, w)).abs() < 1e-9);
            prop_assert!(scale_error(w, wb) >= 0.0);
        }
    }

    #[test]
    fn roc_trivial_cases() {
        let sep = roc(&[90, 95, 100], &[1, 5, 10]).unwrap();
        assert_eq!(sep.eer, 0.0);
        assert_eq!(sep.gar_at_far_0_1, 1.0);
        let same = roc(&[5, 5], &[5, 5, 5]).unwrap();
        assert!((same.eer - 0.5).abs() < 1e-12);
        assert!(matches!(roc(&[], &[1]), Err(PalmError::EmptyScores)));
    }

    /// Sweeps every integer threshold and interpolates the sign change.
    fn brute_eer(g: &[u32], i: &[u32]) -> f64 {
        let lo = g.iter().chain(i).min().unwrap().saturating_sub(1);
        let hi = g.iter().chain(i).max().unwrap() + 1;
        let rate = |t: u32| {
            let far = i.iter().filter(|&&s| s >= t).count() as f64 / i.len() as f64;
            let frr = g.iter().filter(|&&s| s < t).count() as f64 / g.len() as f64;
            (far, frr)
        };
        let mut prev = rate(lo);
        for t in lo + 1..=hi {
            let cur = rate(t);
            if cur.0 <= cur.1 {
                if cur.0 == cur.1 {
                    return cur.0;
                }
                let (d0, d1) = (prev.0 - prev.1, cur.0 - cur.1);
                let l = d0 / (d0 - d1);
                return prev.0 + l * (cur.0 - prev.0);
            }
            prev = cur;
        }
        unreachable!()
    }

    #[test]
    fn eer_fixture_matches_exhaustive_sweep() {
        let g = [610, 640, 655, 580, 700, 690, 560, 630, 600, 675];
        let i = [420, 500, 575, 610, 480, 450, 530, 390, 470, 515];
        let r = roc(&g, &i).unwrap();
        let expected = brute_eer(&g, &i);
        assert!((r.eer - expected).abs() < 1e-12, "{} vs {expected}", r.eer);
        assert!((r.eer - 0.1).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let g: Vec<u32> = (0..20).map(|_| rng.random_range(20..80)).collect();
            let i: Vec<u32> = (0..20).map(|_| rng.random_range(0..50)).collect();
            assert!((roc(&g, &i).unwrap().eer - brute_eer(&g, &i)).abs() < 1e-12);
        }
    }

    #[test]
    fn ranks_and_cmc() {
        // true identity 7 scores second
        let scores = [(3, 500, 0), (7, 480, 1), (9, 100, 2)];
        assert_eq!(rank_of(&scores, 7), Some(2));
        let curve = CmcCurve::from_ranks(&[1, 2, 1, 1], 3);
        assert_eq!(curve.rates, vec![0.75, 1.0, 1.0]);
        let tie = [(1, 400, 5), (2, 400, 3)];
        assert_eq!(rank_of(&tie, 1), Some(2));
    }

    #[test]
    fn roi_error_examples() {
        assert_eq!(localization_error(Point::new(10.0, 10.0), Point::new(12.0, 11.0), 1.0), 2.0);
        assert!((rotation_error(5.0, 3.0) - 2.0).abs() < 1e-12);
        assert!((rotation_error(179.0, -179.0) - 2.0).abs() < 1e-12);
        assert!((scale_error(100.0, 95.0) - 5.263_157_894_736_842).abs() < 1e-9);
    }

    #[test]
    fn protocol_parse() {
        assert_eq!("exp4".parse::<Protocol>().unwrap(), Protocol::Exp4);
        assert_eq!("Exp.5".parse::<Protocol>().unwrap(), Protocol::Exp5);
        assert_eq!(Protocol::Exp3.to_string(), "exp3");
        assert!("exp9".parse::<Protocol>().is_err());
    }
}
