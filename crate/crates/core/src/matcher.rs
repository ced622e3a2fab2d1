//! Index-and-sum scoring of a one-hot query against the hash table, with
//! translated matching in shared (STM) and per-band (ATM) modes.
//!
//! The score of a query window against a column is the number of gallery
//! bits set at the rows where the query bit is set, computed as
//! `popcount(query & column)` over packed words.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contourcode::{window_one_hot, BinaryCodeMap, ContourCode};
use crate::error::{PalmError, Result};
use crate::gallery::{GalleryManifest, HashTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// All bands translated together.
    Stm,
    /// Each band translated independently, band maxima summed.
    #[default]
    Atm,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Stm => "stm",
            Mode::Atm => "atm",
        })
    }
}

impl FromStr for Mode {
    type Err = PalmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "stm" => Ok(Mode::Stm),
            "atm" => Ok(Mode::Atm),
            other => Err(PalmError::Format(format!("unknown match mode `{other}`"))),
        }
    }
}

/// Window offsets searched for a margin of `(tx, ty)`, ordered so that
/// smaller displacements come first; the first maximum wins ties.
pub fn shift_order(tx: usize, ty: usize) -> Vec<(i32, i32)> {
    let (tx, ty) = (tx as i32, ty as i32);
    let mut shifts: Vec<(i32, i32)> = (-ty..=ty).flat_map(|dy| (-tx..=tx).map(move |dx| (dx, dy))).collect();
    shifts.sort_by_key(|&(dx, dy)| (dx.abs().max(dy.abs()), dx.abs() + dy.abs(), dy, dx));
    shifts
}

/// One-hot query windows for every band and every shift.
#[derive(Debug, Clone)]
pub struct Query {
    bands: usize,
    shifts: Vec<(i32, i32)>,
    band_words: usize,
    /// `words[(b * S + s) * band_words ..]`
    words: Vec<u64>,
}

impl Query {
    /// Builds the shifted windows of full band codes against `manifest`.
    pub fn new(codes: &[ContourCode], manifest: &GalleryManifest) -> Result<Self> {
        if codes.len() != manifest.bands {
            return Err(PalmError::ParamMismatch(format!(
                "query has {} bands, gallery has {}",
                codes.len(),
                manifest.bands
            )));
        }
        let dims = manifest.code_dims();
        for (b, c) in codes.iter().enumerate() {
            if (c.width(), c.height()) != dims || c.k() != manifest.k {
                return Err(PalmError::ParamMismatch(format!(
                    "query band {b} code is {}x{} with k={}, gallery expects {}x{} with k={}",
                    c.width(),
                    c.height(),
                    c.k(),
                    dims.0,
                    dims.1,
                    manifest.k
                )));
            }
        }
        let shifts = shift_order(manifest.t_x, manifest.t_y);
        let band_words = manifest.rows_per_band().div_ceil(64);
        let mut words = Vec::with_capacity(codes.len() * shifts.len() * band_words);
        for code in codes {
            for &(dx, dy) in &shifts {
                let x0 = (manifest.t_x as i32 + dx) as usize;
                let y0 = (manifest.t_y as i32 + dy) as usize;
                words.extend(window_one_hot(code, x0, y0, manifest.m_prime, manifest.n_prime));
            }
        }
        Ok(Self { bands: codes.len(), shifts, band_words, words })
    }

    pub fn shifts(&self) -> &[(i32, i32)] {
        &self.shifts
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    fn window(&self, b: usize, s: usize) -> &[u64] {
        let start = (b * self.shifts.len() + s) * self.band_words;
        &self.words[start..start + self.band_words]
    }
}

#[inline(always)]
fn and_popcount(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x & y).count_ones()).sum()
}

#[inline(always)]
fn column_scores_generic(q: &Query, table: &HashTable, c: usize, out: &mut [u32]) {
    let s_len = q.shifts.len();
    for b in 0..q.bands {
        let g = table.column_band(c, b);
        for s in 0..s_len {
            out[b * s_len + s] = and_popcount(q.window(b, s), g);
        }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "popcnt")]
unsafe fn column_scores_popcnt(q: &Query, table: &HashTable, c: usize, out: &mut [u32]) {
    column_scores_generic(q, table, c, out)
}

/// Per-(band, shift) scores of column `c`, laid out `out[b * S + s]`.
pub fn column_scores(q: &Query, table: &HashTable, c: usize, out: &mut [u32]) {
    assert_eq!(out.len(), q.bands * q.shifts.len());
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("popcnt") {
        // SAFETY: the required CPU feature was detected at runtime
        unsafe { column_scores_popcnt(q, table, c, out) };
        return;
    }
    column_scores_generic(q, table, c, out)
}

/// Unshifted scores of a one-hot band map against band `band` of every
/// column.
pub fn score_once(query: &BinaryCodeMap, table: &HashTable, band: usize) -> Result<Vec<u32>> {
    let m = table.manifest();
    if query.is_blurred() {
        return Err(PalmError::ParamMismatch("query hash vector must not be blurred".into()));
    }
    if (query.width(), query.height(), query.k()) != (m.m_prime, m.n_prime, m.k) {
        return Err(PalmError::ParamMismatch(format!(
            "query window is {}x{} with k={}, gallery uses {}x{} with k={}",
            query.width(),
            query.height(),
            query.k(),
            m.m_prime,
            m.n_prime,
            m.k
        )));
    }
    if band >= m.bands {
        return Err(PalmError::ParamMismatch(format!("band {band} out of range for {} bands", m.bands)));
    }
    Ok((0..table.columns()).map(|c| and_popcount(query.words(), table.column_band(c, band))).collect())
}

/// Index of the maximum of `value` over the shift list. Blurred gallery
/// codes make every neighbor of the true offset score the same, so tied
/// maxima resolve to the rounded centroid of the tied plateau when that
/// centroid is itself tied, and to the first tied shift otherwise.
fn pick_shift(shifts: &[(i32, i32)], value: impl Fn(usize) -> u32) -> (u32, usize) {
    let mut best = (value(0), 0);
    let mut tied = 1;
    let (mut sx, mut sy) = (shifts[0].0, shifts[0].1);
    for (s, &(dx, dy)) in shifts.iter().enumerate().skip(1) {
        let v = value(s);
        if v > best.0 {
            best = (v, s);
            (tied, sx, sy) = (1, dx, dy);
        } else if v == best.0 {
            tied += 1;
            sx += dx;
            sy += dy;
        }
    }
    if tied > 1 {
        let centroid = ((sx as f64 / tied as f64).round() as i32, (sy as f64 / tied as f64).round() as i32);
        if let Some(s) = shifts.iter().position(|&d| d == centroid) {
            if value(s) == best.0 {
                best.1 = s;
            }
        }
    }
    best
}

/// Fused score and winning translations of one column.
fn reduce_column(mode: Mode, bands: usize, shifts: &[(i32, i32)], scores: &[u32], trans: &mut [(i32, i32)]) -> u32 {
    let s_len = shifts.len();
    match mode {
        Mode::Stm => {
            let (score, s) = pick_shift(shifts, |s| (0..bands).map(|b| scores[b * s_len + s]).sum());
            trans.fill(shifts[s]);
            score
        }
        Mode::Atm => {
            let mut total = 0;
            for b in 0..bands {
                let row = &scores[b * s_len..(b + 1) * s_len];
                let (score, s) = pick_shift(shifts, |s| row[s]);
                trans[b] = shifts[s];
                total += score;
            }
            total
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MatchResult {
    pub mode: Mode,
    /// Fused score per column.
    pub scores: Vec<u32>,
    /// Winning `(dx, dy)` per column and band, `translations[c * B + b]`.
    pub translations: Vec<(i32, i32)>,
    pub bands: usize,
    pub best_column: usize,
    pub best_translation: Vec<(i32, i32)>,
    pub decided_class: String,
    /// Another column reached the best score.
    pub tie: bool,
}

impl MatchResult {
    pub fn best_score(&self) -> u32 {
        self.scores[self.best_column]
    }

    pub fn translation(&self, c: usize) -> &[(i32, i32)] {
        &self.translations[c * self.bands..(c + 1) * self.bands]
    }

    /// Per-identity best scores, descending; ties keep column order.
    pub fn ranked_identities(&self, table: &HashTable) -> Vec<(String, u32, usize)> {
        let mut best: Vec<(String, u32, usize)> = Vec::new();
        for (c, e) in table.entries().iter().enumerate() {
            match best.iter_mut().find(|(id, ..)| *id == e.identity) {
                Some(slot) if self.scores[c] > slot.1 => {
                    slot.1 = self.scores[c];
                    slot.2 = c;
                }
                Some(_) => {}
                None => best.push((e.identity.clone(), self.scores[c], c)),
            }
        }
        best.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
        best
    }
}

/// Scores `columns` of `table`; `parallel` spreads columns over the rayon
/// pool. Output is independent of evaluation order.
pub fn match_columns(q: &Query, table: &HashTable, columns: &[usize], mode: Mode, parallel: bool) -> (Vec<u32>, Vec<(i32, i32)>) {
    let bands = q.bands;
    let s_len = q.shifts.len();
    let one = |c: usize, buf: &mut Vec<u32>| {
        let mut trans = vec![(0, 0); bands];
        column_scores(q, table, c, buf);
        let score = reduce_column(mode, bands, &q.shifts, buf, &mut trans);
        (score, trans)
    };
    let results: Vec<(u32, Vec<(i32, i32)>)> = if parallel {
        columns
            .par_iter()
            .map_init(|| vec![0u32; bands * s_len], |buf, &c| one(c, buf))
            .collect()
    } else {
        let mut buf = vec![0u32; bands * s_len];
        columns.iter().map(|&c| one(c, &mut buf)).collect()
    };
    let mut scores = Vec::with_capacity(columns.len());
    let mut translations = Vec::with_capacity(columns.len() * bands);
    for (s, t) in results {
        scores.push(s);
        translations.extend(t);
    }
    (scores, translations)
}

fn check_query(q: &Query, table: &HashTable) -> Result<()> {
    let m = table.manifest();
    if q.bands != m.bands || q.band_words != m.rows_per_band().div_ceil(64) || q.shifts != shift_order(m.t_x, m.t_y) {
        return Err(PalmError::ParamMismatch("query was built for a different gallery layout".into()));
    }
    Ok(())
}

/// Matches against every column.
pub fn match_all(q: &Query, table: &HashTable, mode: Mode) -> Result<MatchResult> {
    check_query(q, table)?;
    if table.is_empty() {
        return Err(PalmError::EmptyGallery);
    }
    let columns: Vec<usize> = (0..table.columns()).collect();
    let (scores, translations) = match_columns(q, table, &columns, mode, true);
    let mut best_column = 0;
    for (c, &s) in scores.iter().enumerate() {
        if s > scores[best_column] {
            best_column = c;
        }
    }
    let tie = scores.iter().filter(|&&s| s == scores[best_column]).count() > 1;
    let bands = q.bands;
    Ok(MatchResult {
        mode,
        best_translation: translations[best_column * bands..(best_column + 1) * bands].to_vec(),
        decided_class: table.entries()[best_column].identity.clone(),
        scores,
        translations,
        bands,
        best_column,
        tie,
    })
}

pub fn match_stm(q: &Query, table: &HashTable) -> Result<MatchResult> {
    match_all(q, table, Mode::Stm)
}

pub fn match_atm(q: &Query, table: &HashTable) -> Result<MatchResult> {
    match_all(q, table, Mode::Atm)
}

/// Full-table identification.
pub fn identify(q: &Query, table: &HashTable, mode: Mode) -> Result<MatchResult> {
    match_all(q, table, mode)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Verification {
    pub accepted: bool,
    pub score: u32,
    pub column: usize,
    pub translation: Vec<(i32, i32)>,
}

/// Matches only the claimant's columns; accepts iff the best fused score
/// reaches `threshold`.
pub fn verify(q: &Query, table: &HashTable, claimed: &str, threshold: u32, mode: Mode) -> Result<Verification> {
    check_query(q, table)?;
    let columns = table.columns_of(claimed);
    if columns.is_empty() {
        return Err(PalmError::UnknownIdentity(claimed.to_string()));
    }
    let (scores, translations) = match_columns(q, table, &columns, mode, false);
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    let bands = q.bands;
    Ok(Verification {
        accepted: scores[best] >= threshold,
        score: scores[best],
        column: columns[best],
        translation: translations[best * bands..(best + 1) * bands].to_vec(),
    })
}
