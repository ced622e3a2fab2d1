//! Hand segmentation, finger-valley landmarks, ROI extraction and inter-band
//! registration.
//!
//! Hands are expected with the fingers entering from the left image edge;
//! [`HandOrientation`] rotates other presentations into that pose. The
//! hand frame has its Y axis along P1 -> P2 and its X axis perpendicular,
//! pointing into the palm.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{PalmError, Result};
use crate::raster::{
    affine_sample, close, fill_holes, largest_component, otsu_threshold, resize_bicubic, threshold, BinaryImage,
    GrayImage, Point,
};

/// Output side of every ROI band.
pub const ROI_SIDE: usize = 32;

/// ROI side as a fraction of the mean palm width.
pub const ROI_FRACTION: f64 = 0.7;

/// Distance of the ROI center from the P1-P2 axis, as a fraction of the
/// mean palm width.
pub const ROI_CENTER_OFFSET: f64 = 0.5;

/// Traces with fewer midpoints are treated as contour noise.
pub const MIN_MIDPOINTS: usize = 5;

/// Translation search radius of inter-band registration.
pub const REGISTRATION_RADIUS: i32 = 2;

const MI_BINS: usize = 32;

/// The three inter-finger valley landmarks plus the derived palm geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Landmarks {
    /// Pinky-ring valley.
    pub p1: Point,
    /// Ring-middle valley.
    pub p2: Point,
    /// Middle-index valley.
    pub p3: Point,
    /// Mean palm width in source pixels.
    pub palm_width_bar: f64,
    /// Angle of the P1 -> P2 axis from vertical, degrees.
    pub theta: f64,
}

/// Signed angle of `a -> b` from the image vertical, degrees.
pub fn axis_angle(a: Point, b: Point) -> f64 {
    let v = b.sub(a);
    v.x.atan2(v.y).to_degrees()
}

/// Registered, equally sized ROI bands of one multispectral sample.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiSet {
    pub bands: Vec<GrayImage>,
    pub band_labels: Vec<String>,
    pub source_landmarks: Option<Landmarks>,
    /// Source pixels per ROI pixel, `0.7 * w / 32`; 1 when unknown.
    pub scale_factor: f64,
    /// Registration shift applied to each band (band 0 is always zero).
    pub shifts: Vec<(i32, i32)>,
}

impl RoiSet {
    /// Bands without landmark provenance (e.g. ROIs loaded from disk).
    pub fn from_bands(bands: Vec<GrayImage>) -> Result<Self> {
        let labels = (0..bands.len()).map(|b| format!("band{b}")).collect();
        Self::with_labels(bands, labels)
    }

    pub fn with_labels(bands: Vec<GrayImage>, band_labels: Vec<String>) -> Result<Self> {
        let Some(first) = bands.first() else {
            return Err(PalmError::Dimension("ROI set has no bands".into()));
        };
        let dims = first.dims();
        if let Some(bad) = bands.iter().find(|b| b.dims() != dims) {
            return Err(PalmError::Dimension(format!(
                "band is {}x{}, expected {}x{}",
                bad.width(),
                bad.height(),
                dims.0,
                dims.1
            )));
        }
        if band_labels.len() != bands.len() {
            return Err(PalmError::Dimension(format!(
                "{} band labels for {} bands",
                band_labels.len(),
                bands.len()
            )));
        }
        let shifts = vec![(0, 0); bands.len()];
        Ok(Self { bands, band_labels, source_landmarks: None, scale_factor: 1.0, shifts })
    }

    pub fn band_count(&self) -> usize {
        self.bands.len()
    }
}

/// Binarization threshold choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdPolicy {
    #[default]
    Otsu,
    Fixed(u8),
}

impl FromStr for ThresholdPolicy {
    type Err = PalmError;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("otsu") {
            return Ok(Self::Otsu);
        }
        s.parse::<u8>()
            .map(Self::Fixed)
            .map_err(|_| PalmError::Format(format!("threshold must be `otsu` or 0..=255, got `{s}`")))
    }
}

impl fmt::Display for ThresholdPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Otsu => f.write_str("otsu"),
            Self::Fixed(t) => write!(f, "{t}"),
        }
    }
}

/// Image edge the fingers enter from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HandOrientation {
    #[default]
    Left,
    Right,
    Up,
    Down,
}

impl FromStr for HandOrientation {
    type Err = PalmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "left" => Ok(Self::Left),
            "right" => Ok(Self::Right),
            "up" => Ok(Self::Up),
            "down" => Ok(Self::Down),
            _ => Err(PalmError::Format(format!("unknown hand orientation `{s}`"))),
        }
    }
}

impl HandOrientation {
    /// Rotates an image so the fingers enter from the left.
    pub fn to_canonical<T: Copy + Default>(self, img: &crate::raster::Image<T>) -> crate::raster::Image<T> {
        match self {
            Self::Left => img.clone(),
            Self::Right => img.flip_horizontal().flip_vertical(),
            Self::Up => img.rotate90_ccw(),
            Self::Down => img.rotate90_cw(),
        }
    }

    /// Maps a point of the canonical image back to the source image of
    /// size `w x h`.
    pub fn point_to_source(self, p: Point, w: usize, h: usize) -> Point {
        let (w, h) = (w as f64, h as f64);
        match self {
            Self::Left => p,
            Self::Right => Point::new(w - 1.0 - p.x, h - 1.0 - p.y),
            Self::Up => Point::new(w - 1.0 - p.y, p.x),
            Self::Down => Point::new(p.y, h - 1.0 - p.x),
        }
    }
}

/// Parameters of landmark detection and ROI extraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiConfig {
    pub threshold: ThresholdPolicy,
    /// Side of the square closing element.
    pub closing: usize,
    pub orientation: HandOrientation,
    pub roi_side: usize,
}

impl Default for RoiConfig {
    fn default() -> Self {
        Self { threshold: ThresholdPolicy::Otsu, closing: 5, orientation: HandOrientation::Left, roi_side: ROI_SIDE }
    }
}

/// Threshold, keep the largest component, close, fill holes.
pub fn segment_hand(img: &GrayImage, policy: ThresholdPolicy, closing: usize) -> Result<BinaryImage> {
    let t = match policy {
        ThresholdPolicy::Otsu => otsu_threshold(img),
        ThresholdPolicy::Fixed(t) => t,
    };
    let hand = largest_component(&threshold(img, t))?;
    let closed = if closing > 1 { close(&hand, closing | 1) } else { hand };
    let filled = fill_holes(&closed);
    if filled.count() == 0 {
        return Err(PalmError::EmptyMask);
    }
    Ok(filled)
}

/// Midpoints of one inter-finger gap, followed column by column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValleyTrace {
    pub midpoints: Vec<Point>,
    /// Where the hand first spans the former gap.
    pub termination: Point,
}

impl ValleyTrace {
    pub fn p_t(&self) -> usize {
        self.midpoints.len()
    }

    /// Tail points left out of the fit, 10% of the midpoints.
    pub fn p_e(&self) -> usize {
        (self.p_t() as f64 * 0.1).round() as usize
    }
}

/// Background runs bounded by foreground above and below, inclusive rows.
fn column_gaps(mask: &BinaryImage, x: usize) -> Vec<(usize, usize)> {
    let h = mask.height();
    let mut gaps = Vec::new();
    let mut y = 0;
    while y < h && !mask.get(x, y) {
        y += 1;
    }
    while y < h {
        while y < h && mask.get(x, y) {
            y += 1;
        }
        let start = y;
        while y < h && !mask.get(x, y) {
            y += 1;
        }
        if y < h {
            gaps.push((start, y - 1));
        }
    }
    gaps
}

struct OpenTrace {
    gap: (usize, usize),
    midpoints: Vec<Point>,
}

fn midpoint(x: usize, gap: (usize, usize)) -> Point {
    Point::new(x as f64, (gap.0 + gap.1) as f64 / 2.0)
}

/// Follows inter-finger gaps column by column from the left edge and
/// returns the traces that close inside the image.
///
/// A gap continues the trace whose previous gap it overlaps. When several
/// traces flow into one gap the longest survives; a trace overlapping
/// several gaps ends and each gap starts afresh. A trace with no
/// overlapping gap has closed if the hand spans its former gap, and is
/// dropped otherwise.
pub fn trace_valleys(mask: &BinaryImage) -> Result<Vec<ValleyTrace>> {
    let mut open: Vec<OpenTrace> = Vec::new();
    let mut closed: Vec<ValleyTrace> = Vec::new();
    let overlaps = |a: (usize, usize), b: (usize, usize)| a.0 <= b.1 && b.0 <= a.1;
    for x in 0..mask.width() {
        let gaps = column_gaps(mask, x);
        let mut heirs: Vec<Option<OpenTrace>> = (0..gaps.len()).map(|_| None).collect();
        for trace in open {
            let linked: Vec<usize> = (0..gaps.len()).filter(|&g| overlaps(trace.gap, gaps[g])).collect();
            match linked.as_slice() {
                [] => {
                    let (a, b) = trace.gap;
                    if (a..=b).all(|y| mask.get(x, y)) {
                        closed.push(ValleyTrace { termination: midpoint(x, trace.gap), midpoints: trace.midpoints });
                    }
                }
                &[g] => {
                    let longer = heirs[g].as_ref().is_none_or(|h| trace.midpoints.len() > h.midpoints.len());
                    if longer {
                        heirs[g] = Some(trace);
                    }
                }
                _ => {}
            }
        }
        open = heirs
            .into_iter()
            .zip(&gaps)
            .map(|(heir, &gap)| {
                let mut t = heir.unwrap_or(OpenTrace { gap, midpoints: Vec::new() });
                t.gap = gap;
                t.midpoints.push(midpoint(x, gap));
                t
            })
            .collect();
    }
    let traces: Vec<ValleyTrace> = closed.into_iter().filter(|t| t.midpoints.len() >= MIN_MIDPOINTS).collect();
    if traces.len() != 4 {
        return Err(PalmError::ValleyCount { found: traces.len() });
    }
    Ok(traces)
}

/// Least-squares `y = c0 + c1 x + c2 x^2` about `x0`; `None` when the
/// normal matrix is singular.
pub fn fit_quadratic(points: &[Point], x0: f64) -> Option<[f64; 3]> {
    let mut m = [[0.0f64; 4]; 3];
    for p in points {
        let u = p.x - x0;
        let basis = [1.0, u, u * u];
        for r in 0..3 {
            for c in 0..3 {
                m[r][c] += basis[r] * basis[c];
            }
            m[r][3] += basis[r] * p.y;
        }
    }
    let scale = m[0][0].max(1.0) * m[2][2].max(1.0);
    // Gauss-Jordan with partial pivoting
    for col in 0..3 {
        let piv = (col..3).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[piv][col].abs() <= 1e-12 * scale.sqrt() {
            return None;
        }
        m.swap(col, piv);
        for r in 0..3 {
            if r != col {
                let f = m[r][col] / m[col][col];
                for c in col..4 {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
    }
    Some([m[0][3] / m[0][0], m[1][3] / m[1][1], m[2][3] / m[2][2]])
}

/// Refined valley landmark and whether it fell back to the termination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinedLandmark {
    pub point: Point,
    pub fallback: bool,
    /// Fitted valley curve `y = c0 + c1 u + c2 u^2` with `u = x - x0`, as
    /// `(x0, [c0, c1, c2])`; absent on fallback.
    pub curve: Option<(f64, [f64; 3])>,
}

/// Fits a quadratic to the midpoints minus the last 10%, then walks the
/// curve from the first excluded point in half-pixel arc steps; the
/// landmark is the last background sample before the hand.
pub fn refine_landmark(trace: &ValleyTrace, mask: &BinaryImage) -> RefinedLandmark {
    let fallback = RefinedLandmark { point: trace.termination, fallback: true, curve: None };
    let p_t = trace.p_t();
    if p_t < 10 {
        return fallback;
    }
    let fitted = &trace.midpoints[..p_t - trace.p_e()];
    let x0 = fitted[fitted.len() - 1].x;
    let Some([c0, c1, c2]) = fit_quadratic(fitted, x0) else {
        return fallback;
    };
    let curve = |x: f64| {
        let u = x - x0;
        c0 + c1 * u + c2 * u * u
    };
    let slope = |x: f64| c1 + 2.0 * c2 * (x - x0);
    let inside = |p: Point| {
        let (xi, yi) = (p.x.round(), p.y.round());
        if xi < 0.0 || yi < 0.0 || xi >= mask.width() as f64 || yi >= mask.height() as f64 {
            return None;
        }
        Some(mask.get(xi as usize, yi as usize))
    };
    let mut x = trace.midpoints[p_t - trace.p_e()].x.min(x0 + 1.0);
    let mut last_bg = None;
    let limit = trace.termination.x + 4.0 * (trace.termination.x - trace.midpoints[0].x).abs().max(10.0);
    while x <= limit {
        let p = Point::new(x, curve(x));
        match inside(p) {
            Some(false) => last_bg = Some(p),
            Some(true) if last_bg.is_some() => break,
            Some(true) => {}
            None => break,
        }
        x += 0.5 / (1.0 + slope(x).powi(2)).sqrt();
    }
    match last_bg {
        Some(point) => RefinedLandmark { point, fallback: false, curve: Some((x0, [c0, c1, c2])) },
        None => fallback,
    }
}

/// Moves a landmark along its valley curve to where the grey level crosses
/// `level`, searching 1.5 px either side; the mask alone only places it to
/// the nearest pixel.
pub fn subpixel_landmark(img: &GrayImage, level: f64, lm: &RefinedLandmark) -> Point {
    let Some((x0, [c0, c1, c2])) = lm.curve else {
        return lm.point;
    };
    let at = |x: f64| {
        let u = x - x0;
        Point::new(x, c0 + c1 * u + c2 * u * u)
    };
    let in_image = |p: Point| p.x >= 0.0 && p.y >= 0.0 && p.x <= (img.width() - 1) as f64 && p.y <= (img.height() - 1) as f64;
    let step = 0.05;
    let start = lm.point.x - 1.5;
    let mut prev: Option<(f64, f64)> = None;
    for i in 0..=60 {
        let x = start + i as f64 * step;
        let p = at(x);
        if !in_image(p) {
            return lm.point;
        }
        let v = img.sample_bilinear(p.x, p.y);
        if let Some((px, pv)) = prev {
            if pv < level && v >= level {
                return at(px + step * (level - pv) / (v - pv));
            }
        }
        prev = Some((x, v));
    }
    lm.point
}

/// Valley landmarks in hand order; `p4` is the discarded thumb-index valley.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValleyPoints {
    pub p1: Point,
    pub p2: Point,
    pub p3: Point,
    pub p4: Point,
}

/// Discards the thumb-index valley (the termination farthest, on average,
/// from the other three) and orders the rest from the pinky side.
pub fn select_landmarks(traces: &[ValleyTrace], points: &[Point]) -> Result<ValleyPoints> {
    if traces.len() != 4 || points.len() != 4 {
        return Err(PalmError::ValleyCount { found: traces.len().min(points.len()) });
    }
    let ends: Vec<Point> = traces.iter().map(|t| t.termination).collect();
    let spread: Vec<f64> =
        (0..4).map(|i| (0..4).filter(|&j| j != i).map(|j| ends[i].dist(ends[j])).sum::<f64>() / 3.0).collect();
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| spread[b].total_cmp(&spread[a]));
    let tol = 1e-9 * spread[order[0]].max(1.0);
    if spread[order[0]] - spread[order[1]] <= tol {
        return Err(PalmError::AmbiguousOrdering { first: order[0], second: order[1] });
    }
    let thumb = order[0];
    let mut rest: Vec<usize> = (0..4).filter(|&i| i != thumb).collect();
    let d: Vec<f64> = (0..4).map(|i| points[i].dist(points[thumb])).collect();
    rest.sort_by(|&a, &b| d[b].total_cmp(&d[a]));
    for w in rest.windows(2) {
        if (d[w[0]] - d[w[1]]).abs() <= tol {
            return Err(PalmError::AmbiguousOrdering { first: w[0], second: w[1] });
        }
    }
    Ok(ValleyPoints { p1: points[rest[0]], p2: points[rest[1]], p3: points[rest[2]], p4: points[thumb] })
}

/// Unit hand-frame axes: Y along P1 -> P2, X perpendicular toward `inner`.
pub fn hand_axes(p1: Point, p2: Point, inner: Point) -> (Point, Point) {
    let v = p2.sub(p1);
    let y = v.scale(1.0 / v.norm());
    let mut x = Point::new(y.y, -y.x);
    if inner.sub(p1).dot(x) < 0.0 {
        x = x.scale(-1.0);
    }
    (x, y)
}

/// Mean palm width over hand-frame scanlines from `x_s = |P1P2| / 3` to
/// `x_t = X(P4) - |P1P2| / 12`; each scanline runs parallel to the Y axis
/// and contributes its longest foreground run.
pub fn palm_width(mask: &BinaryImage, v: &ValleyPoints) -> Result<f64> {
    let (xa, ya) = hand_axes(v.p1, v.p2, v.p4);
    let d = v.p2.sub(v.p1).norm();
    let start = d / 3.0;
    let end = v.p4.sub(v.p1).dot(xa) - d / 12.0;
    if !(start < end) {
        return Err(PalmError::EmptyRange { start, end });
    }
    let reach = (mask.width() as f64).hypot(mask.height() as f64);
    let step = 0.5;
    let n = (2.0 * reach / step) as usize;
    let mut widths = Vec::new();
    let mut xs = start;
    while xs <= end {
        let base = v.p1.add(xa.scale(xs));
        let (mut best, mut run) = (0usize, 0usize);
        for i in 0..=n {
            let p = base.add(ya.scale(-reach + i as f64 * step));
            let (xi, yi) = (p.x.round(), p.y.round());
            let fg = xi >= 0.0
                && yi >= 0.0
                && xi < mask.width() as f64
                && yi < mask.height() as f64
                && mask.get(xi as usize, yi as usize);
            run = if fg { run + 1 } else { 0 };
            best = best.max(run);
        }
        if best > 0 {
            widths.push(best as f64 * step);
        }
        xs += 1.0;
    }
    if widths.is_empty() {
        return Err(PalmError::EmptyRange { start, end });
    }
    Ok(widths.iter().sum::<f64>() / widths.len() as f64)
}

/// Square ROI placement in source pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiFrame {
    pub center: Point,
    /// Unit ROI x axis (hand X); the ROI y axis is this turned by +90 degrees.
    pub x_axis: Point,
    pub side: f64,
}

impl RoiFrame {
    pub fn new(lm: &Landmarks, inner: Point) -> Self {
        let (xa, _) = hand_axes(lm.p1, lm.p2, inner);
        let anchor = lm.p1.add(lm.p2.sub(lm.p1).scale(2.0 / 3.0));
        let w = lm.palm_width_bar;
        Self { center: anchor.add(xa.scale(ROI_CENTER_OFFSET * w)), x_axis: xa, side: ROI_FRACTION * w }
    }

    /// Source position of output pixel (0, 0) for an `n`-pixel sampling.
    pub fn origin(&self, n: usize) -> Point {
        let step = self.side / n as f64;
        let half = (n as f64 - 1.0) / 2.0 * step;
        self.center.sub(self.x_axis.scale(half)).sub(self.x_axis.perp().scale(half))
    }

    /// Source pixels per ROI pixel at output size `m`.
    pub fn scale_factor(&self, m: usize) -> f64 {
        self.side / m as f64
    }
}

/// Samples the ROI at source resolution (about one source pixel per ROI
/// pixel).
pub fn extract_native(img: &GrayImage, frame: &RoiFrame) -> Result<GrayImage> {
    let n = frame.side.round().max(1.0) as usize;
    affine_sample(img, frame.origin(n), frame.x_axis, frame.side, n)
}

/// Native extraction followed by a bicubic resize to `m x m`.
pub fn extract_roi(img: &GrayImage, frame: &RoiFrame, m: usize) -> Result<GrayImage> {
    Ok(resize_bicubic(&extract_native(img, frame)?, m, m))
}

/// Mutual information of `a(x, y)` and `b(x + dx, y + dy)` over their overlap.
pub fn mutual_information(a: &GrayImage, b: &GrayImage, dx: i32, dy: i32) -> f64 {
    let (w, h) = (a.width() as i32, a.height() as i32);
    let mut joint = vec![0u32; MI_BINS * MI_BINS];
    let mut n = 0u32;
    for y in 0.max(-dy)..h.min(h - dy) {
        for x in 0.max(-dx)..w.min(w - dx) {
            let va = a.get(x as usize, y as usize) as usize * MI_BINS / 256;
            let vb = b.get((x + dx) as usize, (y + dy) as usize) as usize * MI_BINS / 256;
            joint[va * MI_BINS + vb] += 1;
            n += 1;
        }
    }
    if n == 0 {
        return 0.0;
    }
    let mut pa = [0u32; MI_BINS];
    let mut pb = [0u32; MI_BINS];
    for i in 0..MI_BINS {
        for j in 0..MI_BINS {
            pa[i] += joint[i * MI_BINS + j];
            pb[j] += joint[i * MI_BINS + j];
        }
    }
    let nf = n as f64;
    let mut mi = 0.0;
    for i in 0..MI_BINS {
        for j in 0..MI_BINS {
            let c = joint[i * MI_BINS + j];
            if c > 0 {
                mi += c as f64 / nf * (c as f64 * nf / (pa[i] as f64 * pb[j] as f64)).ln();
            }
        }
    }
    mi
}

/// Shift `(dx, dy)` within the radius maximizing MI, where the band is
/// modeled as `band(x, y) = reference(x - dx, y - dy)`. Ties prefer the
/// smaller displacement.
pub fn estimate_shift(reference: &GrayImage, band: &GrayImage, radius: i32) -> (i32, i32) {
    let mut shifts: Vec<(i32, i32)> =
        (-radius..=radius).flat_map(|dy| (-radius..=radius).map(move |dx| (dx, dy))).collect();
    shifts.sort_by_key(|&(dx, dy)| (dx.abs().max(dy.abs()), dx.abs() + dy.abs(), dy, dx));
    let mut best = (f64::NEG_INFINITY, (0, 0));
    for (dx, dy) in shifts {
        let mi = mutual_information(reference, band, dx, dy);
        if mi > best.0 + 1e-12 {
            best = (mi, (dx, dy));
        }
    }
    best.1
}

/// Aligns every band to band 0 by MI over integer shifts within +-2 px,
/// then resizes all bands to `m x m`.
pub fn register_bands(native: &[GrayImage], labels: Vec<String>, m: usize) -> Result<RoiSet> {
    let Some(reference) = native.first() else {
        return Err(PalmError::Dimension("no bands to register".into()));
    };
    let mut shifts = vec![(0, 0)];
    let mut bands = vec![resize_bicubic(reference, m, m)];
    for band in &native[1..] {
        if band.dims() != reference.dims() {
            return Err(PalmError::Dimension("bands differ in size".into()));
        }
        let (dx, dy) = estimate_shift(reference, band, REGISTRATION_RADIUS);
        shifts.push((dx, dy));
        let aligned = band.translate(-dx as isize, -dy as isize);
        bands.push(resize_bicubic(&aligned, m, m));
    }
    let mut set = RoiSet::with_labels(bands, labels)?;
    set.shifts = shifts;
    Ok(set)
}

/// Everything found on one hand, in the canonical (fingers-left) frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandAnalysis {
    pub valleys: ValleyPoints,
    pub landmarks: Landmarks,
    pub frame: RoiFrame,
    pub fallbacks: usize,
}

/// Landmarks and ROI frame of a canonical-pose hand image.
pub fn analyze_hand(img: &GrayImage, cfg: &RoiConfig) -> Result<(BinaryImage, HandAnalysis)> {
    let mask = segment_hand(img, cfg.threshold, cfg.closing)?;
    let traces = trace_valleys(&mask)?;
    let refined: Vec<RefinedLandmark> = traces.iter().map(|t| refine_landmark(t, &mask)).collect();
    let level = match cfg.threshold {
        ThresholdPolicy::Otsu => otsu_threshold(img),
        ThresholdPolicy::Fixed(t) => t,
    } as f64
        + 0.5;
    let points: Vec<Point> = refined.iter().map(|r| subpixel_landmark(img, level, r)).collect();
    let valleys = select_landmarks(&traces, &points)?;
    let w = palm_width(&mask, &valleys)?;
    let landmarks = Landmarks {
        p1: valleys.p1,
        p2: valleys.p2,
        p3: valleys.p3,
        palm_width_bar: w,
        theta: axis_angle(valleys.p1, valleys.p2),
    };
    let frame = RoiFrame::new(&landmarks, valleys.p4);
    let fallbacks = refined.iter().filter(|r| r.fallback).count();
    Ok((mask, HandAnalysis { valleys, landmarks, frame, fallbacks }))
}

/// Full pipeline for one multispectral hand: landmarks from band 0, the
/// same ROI cut from every band, MI registration, resize.
pub fn process_hand(bands: &[GrayImage], labels: Vec<String>, cfg: &RoiConfig) -> Result<(RoiSet, HandAnalysis)> {
    let canon: Vec<GrayImage> = bands.iter().map(|b| cfg.orientation.to_canonical(b)).collect();
    let Some(first) = canon.first() else {
        return Err(PalmError::Dimension("no bands".into()));
    };
    let (_, analysis) = analyze_hand(first, cfg)?;
    let native = canon.iter().map(|b| extract_native(b, &analysis.frame)).collect::<Result<Vec<_>>>()?;
    let mut set = register_bands(&native, labels, cfg.roi_side)?;
    set.source_landmarks = Some(analysis.landmarks);
    set.scale_factor = analysis.frame.scale_factor(cfg.roi_side);
    Ok((set, analysis))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{resize_bicubic, Image};
    use crate::synth::{gen_hand, gen_hand_bands, render_identity_bands, SynthHandSpec, SynthIdentitySpec};

    fn upright(seed: u64) -> SynthHandSpec {
        SynthHandSpec::random(seed).with_pose(0.0, 1.0).fit_canvas((30.0, 30.0), (0.5, 0.5))
    }

    fn rms(a: &GrayImage, b: &GrayImage) -> f64 {
        let s: f64 = a.pixels().iter().zip(b.pixels()).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum();
        (s / a.pixels().len() as f64).sqrt()
    }

    #[test]
    fn segmentation_recovers_noisy_silhouette() {
        for seed in 0..4 {
            let hand = gen_hand(&SynthHandSpec::random(seed)).unwrap();
            let mask = segment_hand(&hand.bands[0], ThresholdPolicy::Otsu, 5).unwrap();
            let agree = mask.pixels().iter().zip(hand.mask.pixels()).filter(|(a, b)| a == b).count();
            assert!(agree as f64 >= 0.995 * mask.pixels().len() as f64, "seed {seed}: {agree}");
        }
    }

    #[test]
    fn clean_silhouette_is_unchanged_and_blank_fails() {
        let hand = gen_hand(&upright(1)).unwrap();
        let clean = segment_hand(&hand.mask.to_gray(), ThresholdPolicy::Fixed(128), 1).unwrap();
        assert_eq!(clean, hand.mask);
        let blank = GrayImage::filled(50, 40, 0);
        assert!(matches!(segment_hand(&blank, ThresholdPolicy::Fixed(10), 5), Err(PalmError::EmptyMask)));
    }

    #[test]
    fn traces_end_at_valley_bottoms() {
        let hand = gen_hand(&upright(2)).unwrap();
        let mask = segment_hand(&hand.bands[0], ThresholdPolicy::Otsu, 5).unwrap();
        let traces = trace_valleys(&mask).unwrap();
        let lm = hand.landmarks;
        for truth in [lm.p1, lm.p2, lm.p3, hand.thumb_valley] {
            let best = traces.iter().map(|t| t.termination.chebyshev(truth)).fold(f64::MAX, f64::min);
            assert!(best <= 2.0, "valley {truth:?} missed by {best}");
        }
    }

    #[test]
    fn rotated_hand_still_has_four_valleys() {
        let spec = SynthHandSpec::random(3).with_pose(45.0, 1.0).fit_canvas((10.0, 10.0), (0.5, 0.5));
        let hand = gen_hand(&spec).unwrap();
        let mask = segment_hand(&hand.bands[0], ThresholdPolicy::Otsu, 5).unwrap();
        assert_eq!(trace_valleys(&mask).unwrap().len(), 4);
    }

    #[test]
    fn fist_has_no_valleys() {
        let fist = BinaryImage::from_fn(120, 100, |x, y| Point::new(x as f64, y as f64).dist(Point::new(60.0, 50.0)) < 40.0);
        assert!(matches!(trace_valleys(&fist), Err(PalmError::ValleyCount { found: 0 })));
    }

    #[test]
    fn quadratic_fit_is_exact() {
        let pts: Vec<Point> = (0..30).map(|i| i as f64).map(|x| Point::new(x, 0.01 * x * x + x)).collect();
        let [c0, c1, c2] = fit_quadratic(&pts, 0.0).unwrap();
        assert!(c0.abs() < 1e-6 && (c1 - 1.0).abs() < 1e-6 && (c2 - 0.01).abs() < 1e-6);
        let line: Vec<Point> = (0..20).map(|i| Point::new(i as f64 + 5.0, 3.0 - 0.5 * i as f64)).collect();
        let [_, c1, c2] = fit_quadratic(&line, 5.0).unwrap();
        assert!((c1 + 0.5).abs() < 1e-9 && c2.abs() < 1e-9);
        let column = vec![Point::new(4.0, 1.0), Point::new(4.0, 2.0), Point::new(4.0, 3.0)];
        assert!(fit_quadratic(&column, 4.0).is_none());
    }

    #[test]
    fn single_column_trace_falls_back() {
        let mask = BinaryImage::new(20, 20);
        let trace = ValleyTrace { midpoints: vec![Point::new(3.0, 5.0); 12], termination: Point::new(4.0, 5.0) };
        let r = refine_landmark(&trace, &mask);
        assert!(r.fallback);
        assert_eq!(r.point, trace.termination);
    }

    #[test]
    fn landmarks_follow_generator_labels_mirrored_or_not() {
        for mirrored in [false, true] {
            let mut spec = SynthHandSpec::random(4);
            spec.mirrored = mirrored;
            let spec = spec.posed(77);
            let hand = gen_hand(&spec).unwrap();
            let (_, a) = analyze_hand(&hand.bands[0], &RoiConfig::default()).unwrap();
            let (got, want) = (a.landmarks, hand.landmarks);
            for (g, w) in [(got.p1, want.p1), (got.p2, want.p2), (got.p3, want.p3)] {
                assert!(g.chebyshev(w) < 4.0, "mirrored {mirrored}: {g:?} vs {w:?}");
            }
            let p4 = a.valleys.p4;
            assert!([want.p1, want.p2, want.p3].iter().all(|&p| p4.dist(hand.thumb_valley) < p4.dist(p)));
        }
    }

    #[test]
    fn equidistant_valleys_are_ambiguous() {
        let square = [Point::new(0.0, 0.0), Point::new(10.0, 0.0), Point::new(10.0, 10.0), Point::new(0.0, 10.0)];
        let traces: Vec<ValleyTrace> =
            square.iter().map(|&p| ValleyTrace { midpoints: vec![p; 5], termination: p }).collect();
        assert!(matches!(select_landmarks(&traces, &square), Err(PalmError::AmbiguousOrdering { .. })));
    }

    fn valleys(p1: Point, p2: Point, p4: Point) -> ValleyPoints {
        ValleyPoints { p1, p2, p3: p2, p4 }
    }

    #[test]
    fn rectangle_palm_width() {
        let mask = BinaryImage::from_fn(320, 200, |x, y| (20..300).contains(&x) && (50..150).contains(&y));
        let v = valleys(Point::new(20.0, 60.0), Point::new(20.0, 100.0), Point::new(200.0, 149.0));
        let w = palm_width(&mask, &v).unwrap();
        assert!((w - 100.0).abs() <= 0.5, "{w}");
    }

    #[test]
    fn trapezoid_palm_width() {
        // Width grows linearly from 90 at x_s to 110 at x_t.
        let (p1, p2, p4) = (Point::new(20.0, 80.0), Point::new(20.0, 140.0), Point::new(200.0, 150.0));
        let (xs, xt) = (p1.x + 20.0, p4.x - 5.0);
        let mask = BinaryImage::from_fn(260, 260, |x, y| {
            let half = (90.0 + 20.0 * (x as f64 - xs) / (xt - xs)) / 2.0;
            x >= 20 && x < 240 && (y as f64 - 130.0).abs() < half
        });
        let w = palm_width(&mask, &valleys(p1, p2, p4)).unwrap();
        assert!((w - 100.0).abs() <= 1.0, "{w}");
    }

    #[test]
    fn empty_scan_range_is_reported() {
        let mask = BinaryImage::new(50, 50);
        let v = valleys(Point::new(20.0, 10.0), Point::new(20.0, 40.0), Point::new(21.0, 45.0));
        assert!(matches!(palm_width(&mask, &v), Err(PalmError::EmptyRange { .. })));
    }

    fn textured(spec: SynthHandSpec, seed: u64) -> RoiSet {
        let mut spec = spec;
        spec.salt_pepper = 0.0;
        let hand = gen_hand_bands(&spec, &SynthIdentitySpec::random(seed + 100), 4).unwrap();
        let labels = (0..4).map(|b| format!("band{b}")).collect();
        process_hand(&hand.bands, labels, &RoiConfig::default()).unwrap().0
    }

    fn posed(seed: u64, rotation: f64, scale: f64) -> SynthHandSpec {
        SynthHandSpec::random(seed).with_pose(rotation, scale).fit_canvas((20.0, 20.0), (0.5, 0.5))
    }

    #[test]
    fn roi_is_scale_invariant() {
        // Vein-dominant band: sub-pixel landmark jitter at the small scale
        // moves the fine wrinkles of line-dominant bands by a few levels.
        for seed in 0..10 {
            let small = textured(posed(seed, 0.0, 0.625), seed);
            let large = textured(posed(seed, 0.0, 1.25), seed);
            let d = rms(&small.bands[3], &large.bands[3]);
            assert!(d <= 3.0, "seed {seed}: rms {d}");
        }
    }

    #[test]
    fn roi_is_rotation_invariant() {
        for seed in 0..10 {
            let a = textured(posed(seed, 0.0, 1.0), seed);
            let b = textured(posed(seed, 20.0, 1.0), seed);
            for (x, y) in a.bands.iter().zip(&b.bands) {
                let d = rms(x, y);
                assert!(d < 5.0, "seed {seed}: rms {d}");
            }
        }
    }

    #[test]
    fn axis_aligned_roi_is_a_crop() {
        let img = GrayImage::from_fn(80, 70, |x, y| ((x * 7 + y * 13) % 251) as u8);
        let frame = RoiFrame { center: Point::new(39.5, 29.5), x_axis: Point::new(1.0, 0.0), side: 40.0 };
        let crop = img.crop(20, 10, 40, 40).unwrap();
        assert_eq!(extract_native(&img, &frame).unwrap(), crop);
        assert_eq!(extract_roi(&img, &frame, 32).unwrap(), resize_bicubic(&crop, 32, 32));
    }

    #[test]
    fn registration_recovers_known_shift() {
        let bands = render_identity_bands(&SynthIdentitySpec::random(11), 80, 4).unwrap();
        let shifted = bands[1].translate(1, -2);
        assert_eq!(estimate_shift(&bands[0], &shifted, 2), (1, -2));
        assert_eq!(estimate_shift(&bands[0], &bands[0], 2), (0, 0));
        let set = register_bands(&[bands[0].clone(), shifted], vec!["a".into(), "b".into()], 32).unwrap();
        assert_eq!(set.shifts, vec![(0, 0), (1, -2)]);
        assert!(set.bands.iter().all(|b| b.dims() == (32, 32)));
    }

    #[test]
    fn orientation_round_trip() {
        let img: Image<u8> = GrayImage::from_fn(5, 3, |x, y| (x + 10 * y) as u8);
        for o in [HandOrientation::Left, HandOrientation::Right, HandOrientation::Up, HandOrientation::Down] {
            let c = o.to_canonical(&img);
            for y in 0..c.height() {
                for x in 0..c.width() {
                    let p = o.point_to_source(Point::new(x as f64, y as f64), 5, 3);
                    assert_eq!(c.get(x, y), img.get(p.x as usize, p.y as usize), "{o:?}");
                }
            }
        }
    }

    #[test]
    fn policies_parse() {
        assert_eq!("otsu".parse::<ThresholdPolicy>().unwrap(), ThresholdPolicy::Otsu);
        assert_eq!("40".parse::<ThresholdPolicy>().unwrap(), ThresholdPolicy::Fixed(40));
        assert!("x".parse::<ThresholdPolicy>().is_err());
        assert_eq!("Up".parse::<HandOrientation>().unwrap(), HandOrientation::Up);
    }
}
