//! Orientation codes and their binary hash encoding.
//!
//! A [`ContourCode`] stores, per pixel, the 1-based index of the directional
//! channel with the most negative response. A [`BinaryCodeMap`] is the
//! one-hot (query) or neighborhood-blurred (gallery) expansion of the central
//! `m' x n'` window of a code into `2^k` bins per location.
//!
//! Bit layout: bit `(y * m' + x) * 2^k + (i - 1)` holds bin `i` at `(x, y)`,
//! packed least-significant-bit first into little-endian words/bytes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{PalmError, Result};
use crate::nsct::Decomposition;

/// Per-pixel dominant orientation index in `1..=2^k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContourCode {
    width: usize,
    height: usize,
    k: u32,
    codes: Vec<u8>,
}

impl ContourCode {
    pub fn new(width: usize, height: usize, k: u32, codes: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || codes.len() != width * height {
            return Err(PalmError::BadDimensions { width, height, len: codes.len() });
        }
        let bins = 1u32 << k;
        if let Some(bad) = codes.iter().find(|&&c| c == 0 || u32::from(c) > bins) {
            return Err(PalmError::Dimension(format!("code {bad} outside 1..={bins}")));
        }
        Ok(Self { width, height, k, codes })
    }

    pub fn uniform(width: usize, height: usize, k: u32, code: u8) -> Result<Self> {
        Self::new(width, height, k, vec![code; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn bins(&self) -> usize {
        1 << self.k
    }

    pub fn codes(&self) -> &[u8] {
        &self.codes
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.codes[y * self.width + x]
    }

    /// Integer translation, `out(x, y) = self(x - dx, y - dy)`, edge-clamped.
    pub fn translate(&self, dx: isize, dy: isize) -> Self {
        let mut codes = Vec::with_capacity(self.codes.len());
        for y in 0..self.height as isize {
            for x in 0..self.width as isize {
                let sx = (x - dx).clamp(0, self.width as isize - 1) as usize;
                let sy = (y - dy).clamp(0, self.height as isize - 1) as usize;
                codes.push(self.get(sx, sy));
            }
        }
        Self { codes, ..self.clone() }
    }
}

/// Argmin across channels; ties go to the lowest channel index.
pub fn encode(dec: &Decomposition) -> ContourCode {
    assert!(!dec.psi.is_empty(), "decomposition has no directional subbands");
    let channels = dec.psi.len();
    assert!(channels.is_power_of_two() && channels <= 128, "channel count must be 2^k");
    let k = channels.trailing_zeros();
    let (w, h) = dec.psi[0].dims();
    let mut codes = Vec::with_capacity(w * h);
    for idx in 0..w * h {
        let mut best = 0;
        let mut best_v = dec.psi[0].pixels()[idx];
        for (c, band) in dec.psi.iter().enumerate().skip(1) {
            let v = band.pixels()[idx];
            if v < best_v {
                best = c;
                best_v = v;
            }
        }
        codes.push(best as u8 + 1);
    }
    ContourCode { width: w, height: h, k, codes }
}

/// Blur neighborhood for gallery encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Neighborhood {
    #[serde(rename = "none")]
    None,
    #[default]
    #[serde(rename = "4-connected")]
    Four,
    #[serde(rename = "8-connected")]
    Eight,
}

impl Neighborhood {
    pub fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Neighborhood::None => &[],
            Neighborhood::Four => &[(0, -1), (-1, 0), (1, 0), (0, 1)],
            Neighborhood::Eight => &[(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)],
        }
    }
}

impl fmt::Display for Neighborhood {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Neighborhood::None => "none",
            Neighborhood::Four => "4-connected",
            Neighborhood::Eight => "8-connected",
        })
    }
}

impl FromStr for Neighborhood {
    type Err = PalmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" | "0" => Ok(Neighborhood::None),
            "4" | "4-connected" | "four" => Ok(Neighborhood::Four),
            "8" | "8-connected" | "eight" => Ok(Neighborhood::Eight),
            other => Err(PalmError::Format(format!("unknown blur neighborhood `{other}`"))),
        }
    }
}

/// Binary hash vector for the central window of one band.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryCodeMap {
    m: usize,
    n: usize,
    k: u32,
    words: Vec<u64>,
    blurred: bool,
    /// Full code map and crop origin; blur reads neighbors from it.
    source: Option<(ContourCode, usize, usize)>,
}

#[inline]
fn words_for(bits: usize) -> usize {
    bits.div_ceil(64)
}

impl BinaryCodeMap {
    fn empty(m: usize, n: usize, k: u32) -> Self {
        let bits = (m * n) << k;
        Self { m, n, k, words: vec![0; words_for(bits)], blurred: false, source: None }
    }

    /// Central-window width `m'`.
    pub fn width(&self) -> usize {
        self.m
    }

    /// Central-window height `n'`.
    pub fn height(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn bins(&self) -> usize {
        1 << self.k
    }

    /// Number of bits, `2^k * m' * n'`.
    pub fn bit_len(&self) -> usize {
        (self.m * self.n) << self.k
    }

    pub fn is_blurred(&self) -> bool {
        self.blurred
    }

    /// Raw words, zero-padded past `bit_len`.
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn bit_index(&self, x: usize, y: usize, bin: usize) -> usize {
        debug_assert!(bin >= 1 && bin <= self.bins());
        ((y * self.m + x) << self.k) + bin - 1
    }

    #[inline]
    pub fn get_bit(&self, j: usize) -> bool {
        self.words[j / 64] >> (j % 64) & 1 == 1
    }

    #[inline]
    fn set_bit(&mut self, j: usize) {
        self.words[j / 64] |= 1 << (j % 64);
    }

    /// Whether bin `bin` (1-based) is set at `(x, y)`.
    pub fn get(&self, x: usize, y: usize, bin: usize) -> bool {
        self.get_bit(self.bit_index(x, y, bin))
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Set bins at one location.
    pub fn location_popcount(&self, x: usize, y: usize) -> usize {
        (1..=self.bins()).filter(|&b| self.get(x, y, b)).count()
    }
}

/// One-hot words for the `m x n` window of `code` starting at `(x0, y0)`.
pub fn window_one_hot(code: &ContourCode, x0: usize, y0: usize, m: usize, n: usize) -> Vec<u64> {
    let k = code.k;
    let mut words = vec![0u64; words_for((m * n) << k)];
    for y in 0..n {
        let row = &code.codes[(y0 + y) * code.width + x0..];
        for (x, &c) in row[..m].iter().enumerate() {
            let j = ((y * m + x) << k) + usize::from(c) - 1;
            words[j / 64] |= 1 << (j % 64);
        }
    }
    words
}

/// Crops the central window (margins `tx`, `ty`) and one-hot encodes it.
pub fn hash_encode(code: &ContourCode, tx: usize, ty: usize) -> Result<BinaryCodeMap> {
    let (w, h) = (code.width, code.height);
    if 2 * tx >= w || 2 * ty >= h {
        return Err(PalmError::CropTooLarge { tx, ty, width: w, height: h });
    }
    let (m, n) = (w - 2 * tx, h - 2 * ty);
    let mut map = BinaryCodeMap::empty(m, n, code.k);
    map.words = window_one_hot(code, tx, ty, m, n);
    map.source = Some((code.clone(), tx, ty));
    Ok(map)
}

/// Sets, at every location, the bins of the location's own code and of its
/// neighbors. Neighbors come from the full code map, so the crop border sees
/// real context; neighbors outside the full map are ignored. Maps without a
/// source code map (e.g. unpacked from bytes) reconstruct codes from their
/// own bits and only see neighbors inside the window.
pub fn blur(h: &BinaryCodeMap, neighborhood: Neighborhood) -> BinaryCodeMap {
    let (code, ox, oy) = match &h.source {
        Some((c, ox, oy)) => (c.clone(), *ox, *oy),
        None => (codes_from_one_hot(h), 0, 0),
    };
    let mut out = BinaryCodeMap::empty(h.m, h.n, h.k);
    for y in 0..h.n {
        for x in 0..h.m {
            let (cx, cy) = ((x + ox) as isize, (y + oy) as isize);
            let own = code.get(cx as usize, cy as usize);
            out.set_bit(out.bit_index(x, y, own.into()));
            for &(dx, dy) in neighborhood.offsets() {
                let (nx, ny) = (cx + dx, cy + dy);
                if nx < 0 || ny < 0 || nx >= code.width as isize || ny >= code.height as isize {
                    continue;
                }
                let c = code.get(nx as usize, ny as usize);
                out.set_bit(out.bit_index(x, y, c.into()));
            }
        }
    }
    // blur reads codes, so an empty neighborhood always yields the one-hot map
    out.blurred = neighborhood != Neighborhood::None;
    out.source = h.source.clone();
    out
}

fn codes_from_one_hot(h: &BinaryCodeMap) -> ContourCode {
    let mut codes = Vec::with_capacity(h.m * h.n);
    for y in 0..h.n {
        for x in 0..h.m {
            let c = (1..=h.bins()).find(|&b| h.get(x, y, b)).unwrap_or(1);
            codes.push(c as u8);
        }
    }
    ContourCode { width: h.m, height: h.n, k: h.k, codes }
}

/// Packs the map into `ceil(2^k m' n' / 8)` bytes, bit order as documented
/// at module level; trailing pad bits are zero.
pub fn pack(h: &BinaryCodeMap) -> Vec<u8> {
    let nbytes = h.bit_len().div_ceil(8);
    h.words.iter().flat_map(|w| w.to_le_bytes()).take(nbytes).collect()
}

/// Exact inverse of [`pack`].
pub fn unpack(bytes: &[u8], m: usize, n: usize, k: u32, blurred: bool) -> Result<BinaryCodeMap> {
    let mut map = BinaryCodeMap::empty(m, n, k);
    let nbytes = map.bit_len().div_ceil(8);
    if bytes.len() != nbytes {
        return Err(PalmError::Format(format!(
            "packed code for {m}x{n}, k={k} needs {nbytes} bytes, got {}",
            bytes.len()
        )));
    }
    for (i, chunk) in bytes.chunks(8).enumerate() {
        let mut buf = [0u8; 8];
        buf[..chunk.len()].copy_from_slice(chunk);
        map.words[i] = u64::from_le_bytes(buf);
    }
    map.blurred = blurred;
    Ok(map)
}
