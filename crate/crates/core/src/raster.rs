//! Pixel-level primitives: rasters, thresholding, binary morphology,
//! connected components, hole filling, convolution and resampling.
//!
//! All boundary extension is half-sample symmetric (`x[-1] == x[0]`).

use std::collections::VecDeque;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{PalmError, Result};

/// A 2-D point in pixel coordinates (x to the right, y down).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn chebyshev(self, other: Point) -> f64 {
        (self.x - other.x).abs().max((self.y - other.y).abs())
    }

    pub fn add(self, other: Point) -> Point {
        Point::new(self.x + other.x, self.y + other.y)
    }

    pub fn sub(self, other: Point) -> Point {
        Point::new(self.x - other.x, self.y - other.y)
    }

    pub fn scale(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// Rotates by +90 degrees in image coordinates: (x, y) -> (-y, x).
    pub fn perp(self) -> Point {
        Point::new(-self.y, self.x)
    }
}

/// Scalar pixel types a raster may carry.
pub trait Pixel: Copy + Default + PartialEq + Send + Sync + 'static {
    fn to_f64(self) -> f64;
    fn from_f64(v: f64) -> Self;
}

impl Pixel for u8 {
    fn to_f64(self) -> f64 {
        f64::from(self)
    }
    fn from_f64(v: f64) -> Self {
        v.round().clamp(0.0, 255.0) as u8
    }
}

impl Pixel for f64 {
    fn to_f64(self) -> f64 {
        self
    }
    fn from_f64(v: f64) -> Self {
        v
    }
}

/// Row-major 2-D raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

/// 8-bit grayscale image.
pub type GrayImage = Image<u8>;
/// Floating point image, unit range after `to_unit_float`.
pub type FloatImage = Image<f64>;
/// Binary mask; `true` is foreground.
pub type BinaryImage = Image<bool>;

impl<T: Copy + Default> Image<T> {
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self { width, height, data: vec![T::default(); width * height] }
    }

    pub fn filled(width: usize, height: usize, value: T) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self { width, height, data: vec![value; width * height] }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(PalmError::BadDimensions { width, height, len: data.len() });
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[T] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    /// Reads with half-sample symmetric extension outside the raster.
    #[inline]
    pub fn get_mirror(&self, x: isize, y: isize) -> T {
        self.get(mirror_index(x, self.width), mirror_index(y, self.height))
    }

    /// Reads with `None` outside the raster.
    #[inline]
    pub fn get_checked(&self, x: isize, y: isize) -> Option<T> {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            None
        } else {
            Some(self.get(x as usize, y as usize))
        }
    }

    pub fn map<U: Copy + Default>(&self, f: impl Fn(T) -> U) -> Image<U> {
        Image { width: self.width, height: self.height, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Crops a `w`x`h` window starting at `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if x0 + w > self.width || y0 + h > self.height || w == 0 || h == 0 {
            return Err(PalmError::Dimension(format!(
                "crop {w}x{h}+{x0}+{y0} exceeds {}x{}",
                self.width, self.height
            )));
        }
        Ok(Self::from_fn(w, h, |x, y| self.get(x0 + x, y0 + y)))
    }

    /// Integer translation: `out(x, y) = self(x - dx, y - dy)`, mirror-extended.
    pub fn translate(&self, dx: isize, dy: isize) -> Self {
        Self::from_fn(self.width, self.height, |x, y| {
            self.get_mirror(x as isize - dx, y as isize - dy)
        })
    }

    pub fn flip_horizontal(&self) -> Self {
        Self::from_fn(self.width, self.height, |x, y| self.get(self.width - 1 - x, y))
    }

    pub fn flip_vertical(&self) -> Self {
        Self::from_fn(self.width, self.height, |x, y| self.get(x, self.height - 1 - y))
    }

    /// Quarter-turn rotation, counter-clockwise as displayed (x right, y down).
    pub fn rotate90_ccw(&self) -> Self {
        let (w, h) = (self.width, self.height);
        Self::from_fn(h, w, |x, y| self.get(w - 1 - y, x))
    }

    /// Quarter-turn rotation, clockwise as displayed.
    pub fn rotate90_cw(&self) -> Self {
        let (w, h) = (self.width, self.height);
        Self::from_fn(h, w, |x, y| self.get(y, h - 1 - x))
    }
}

impl<T: Pixel> Image<T> {
    pub fn to_float(&self) -> FloatImage {
        self.map(Pixel::to_f64)
    }

    /// Bilinear sample at a continuous position, mirror-extended.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (xi, yi) = (x0 as isize, y0 as isize);
        let p00 = self.get_mirror(xi, yi).to_f64();
        let p10 = self.get_mirror(xi + 1, yi).to_f64();
        let p01 = self.get_mirror(xi, yi + 1).to_f64();
        let p11 = self.get_mirror(xi + 1, yi + 1).to_f64();
        let top = p00 + (p10 - p00) * fx;
        let bottom = p01 + (p11 - p01) * fx;
        top + (bottom - top) * fy
    }
}

impl GrayImage {
    /// Converts 8-bit values to the unit range [0, 1].
    pub fn to_unit_float(&self) -> FloatImage {
        self.map(|v| f64::from(v) / 255.0)
    }
}

impl BinaryImage {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn to_gray(&self) -> GrayImage {
        self.map(|b| if b { 255 } else { 0 })
    }
}

/// Half-sample symmetric index reflection into `[0, n)`.
#[inline]
pub fn mirror_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let r = i.rem_euclid(period);
    if r < n {
        r as usize
    } else {
        (period - 1 - r) as usize
    }
}

/// Foreground where `pixel >= t`.
pub fn threshold(img: &GrayImage, t: u8) -> BinaryImage {
    img.map(|v| v >= t)
}

/// Otsu's threshold, returned so that `threshold(img, otsu(img))` splits the
/// two classes (pixels strictly above the Otsu split level are foreground).
pub fn otsu_threshold(img: &GrayImage) -> u8 {
    let mut hist = [0u64; 256];
    for &v in img.pixels() {
        hist[v as usize] += 1;
    }
    let total = img.pixels().len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let mut best = (f64::MIN, 0usize);
    let mut w_b = 0.0;
    let mut sum_b = 0.0;
    for (t, &count) in hist.iter().enumerate() {
        w_b += count as f64;
        if w_b == 0.0 {
            continue;
        }
        let w_f = total - w_b;
        if w_f == 0.0 {
            break;
        }
        sum_b += t as f64 * count as f64;
        let m_b = sum_b / w_b;
        let m_f = (sum_all - sum_b) / w_f;
        let between = w_b * w_f * (m_b - m_f).powi(2);
        if between > best.0 {
            best = (between, t);
        }
    }
    (best.1 + 1).min(255) as u8
}

const NEIGHBORS_8: [(isize, isize); 8] =
    [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];
const NEIGHBORS_4: [(isize, isize); 4] = [(0, -1), (-1, 0), (1, 0), (0, 1)];

/// Labels 8-connected foreground components; returns labels (0 = background)
/// and the pixel count of each label (index 0 unused).
pub fn label_components(mask: &BinaryImage) -> (Vec<u32>, Vec<usize>) {
    let (w, h) = mask.dims();
    let mut labels = vec![0u32; w * h];
    let mut sizes = vec![0usize];
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !mask.pixels()[start] || labels[start] != 0 {
            continue;
        }
        let label = sizes.len() as u32;
        let mut size = 0;
        labels[start] = label;
        queue.push_back(start);
        while let Some(idx) = queue.pop_front() {
            size += 1;
            let (x, y) = ((idx % w) as isize, (idx / w) as isize);
            for (dx, dy) in NEIGHBORS_8 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let n = ny as usize * w + nx as usize;
                if mask.pixels()[n] && labels[n] == 0 {
                    labels[n] = label;
                    queue.push_back(n);
                }
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

/// Keeps only the largest 8-connected foreground component.
/// Equal-size components resolve to the one found first in raster order.
pub fn largest_component(mask: &BinaryImage) -> Result<BinaryImage> {
    let (labels, sizes) = label_components(mask);
    let best = sizes
        .iter()
        .enumerate()
        .skip(1)
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(l, _)| l as u32)
        .ok_or(PalmError::EmptyMask)?;
    Ok(Image {
        width: mask.width,
        height: mask.height,
        data: labels.iter().map(|&l| l == best).collect(),
    })
}

/// Sliding max (dilate) or min (erode) of a 1-D boolean run with window
/// `2 * r + 1`; `outside` is the value assumed beyond the ends.
fn morph_line(src: &[bool], dst: &mut [bool], r: usize, dilate: bool, outside: bool) {
    let n = src.len();
    let target = dilate;
    // prefix counts of `target` values
    let mut prefix = vec![0usize; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + usize::from(src[i] == target);
    }
    for i in 0..n {
        let lo = i as isize - r as isize;
        let hi = i + r;
        let lo_c = lo.max(0) as usize;
        let hi_c = hi.min(n - 1);
        let hits = prefix[hi_c + 1] - prefix[lo_c];
        let clipped = lo < 0 || hi >= n;
        let any_target = hits > 0 || (clipped && outside == target);
        dst[i] = if any_target { target } else { !target };
    }
}

fn morph_square(mask: &BinaryImage, side: usize, dilate: bool) -> BinaryImage {
    let r = side / 2;
    if r == 0 {
        return mask.clone();
    }
    let (w, h) = mask.dims();
    // dilation pads with background, erosion with foreground
    let outside = !dilate;
    let mut rows = mask.clone();
    for y in 0..h {
        let src = &mask.data[y * w..(y + 1) * w];
        morph_line(src, &mut rows.data[y * w..(y + 1) * w], r, dilate, outside);
    }
    let mut out = rows.clone();
    let mut col = vec![false; h];
    let mut col_out = vec![false; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = rows.data[y * w + x];
        }
        morph_line(&col, &mut col_out, r, dilate, outside);
        for y in 0..h {
            out.data[y * w + x] = col_out[y];
        }
    }
    out
}

pub fn dilate(mask: &BinaryImage, side: usize) -> BinaryImage {
    morph_square(mask, side, true)
}

pub fn erode(mask: &BinaryImage, side: usize) -> BinaryImage {
    morph_square(mask, side, false)
}

/// Morphological closing with a `side`x`side` square (`side` odd).
pub fn close(mask: &BinaryImage, side: usize) -> BinaryImage {
    assert!(side % 2 == 1, "structuring element side must be odd");
    erode(&dilate(mask, side), side)
}

/// Fills background regions that are not 4-connected to the image border.
pub fn fill_holes(mask: &BinaryImage) -> BinaryImage {
    let (w, h) = mask.dims();
    let mut outside = vec![false; w * h];
    let mut queue = VecDeque::new();
    let seed = |idx: usize, outside: &mut Vec<bool>, queue: &mut VecDeque<usize>| {
        if !mask.data[idx] && !outside[idx] {
            outside[idx] = true;
            queue.push_back(idx);
        }
    };
    for x in 0..w {
        seed(x, &mut outside, &mut queue);
        seed((h - 1) * w + x, &mut outside, &mut queue);
    }
    for y in 0..h {
        seed(y * w, &mut outside, &mut queue);
        seed(y * w + w - 1, &mut outside, &mut queue);
    }
    while let Some(idx) = queue.pop_front() {
        let (x, y) = ((idx % w) as isize, (idx / w) as isize);
        for (dx, dy) in NEIGHBORS_4 {
            let (nx, ny) = (x + dx, y + dy);
            if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                continue;
            }
            let n = ny as usize * w + nx as usize;
            if !mask.data[n] && !outside[n] {
                outside[n] = true;
                queue.push_back(n);
            }
        }
    }
    Image { width: w, height: h, data: outside.iter().map(|&o| !o).collect() }
}

/// Dense 2-D convolution kernel with odd dimensions; the center tap sits at
/// `(rows / 2, cols / 2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    rows: usize,
    cols: usize,
    taps: Vec<f64>,
}

impl Kernel {
    pub fn new(rows: usize, cols: usize, taps: Vec<f64>) -> Result<Self> {
        if rows % 2 == 0 || cols % 2 == 0 {
            return Err(PalmError::BadKernel { rows, cols });
        }
        if taps.len() != rows * cols {
            return Err(PalmError::Dimension(format!(
                "kernel {rows}x{cols} given {} taps",
                taps.len()
            )));
        }
        Ok(Self { rows, cols, taps })
    }

    pub fn identity() -> Self {
        Self { rows: 1, cols: 1, taps: vec![1.0] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.taps[r * self.cols + c]
    }

    pub fn sum(&self) -> f64 {
        self.taps.iter().sum()
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut taps = Vec::with_capacity(self.taps.len());
        for r in 0..self.rows {
            for c in 0..self.cols {
                taps.push(self.at(r, self.cols - 1 - c));
            }
        }
        Self { rows: self.rows, cols: self.cols, taps }
    }
}

/// Same-size 2-D convolution, `out(p) = sum_q k(q) * img(p - q)`, with
/// half-sample symmetric extension.
pub fn convolve(img: &FloatImage, kernel: &Kernel) -> FloatImage {
    let (w, h) = img.dims();
    let (kr, kc) = (kernel.rows as isize / 2, kernel.cols as isize / 2);
    // pad once so the inner loop is branch-free
    let pw = w + 2 * kc as usize;
    let ph = h + 2 * kr as usize;
    let mut padded = vec![0.0; pw * ph];
    for py in 0..ph {
        let sy = mirror_index(py as isize - kr, h);
        for px in 0..pw {
            let sx = mirror_index(px as isize - kc, w);
            padded[py * pw + px] = img.data[sy * w + sx];
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for r in 0..kernel.rows {
                // kernel row r multiplies image row y + kr - r
                let row = &padded[(y + 2 * kr as usize - r) * pw..];
                let krow = &kernel.taps[r * kernel.cols..(r + 1) * kernel.cols];
                for (c, &k) in krow.iter().enumerate() {
                    acc += k * row[x + 2 * kc as usize - c];
                }
            }
            out[y * w + x] = acc;
        }
    }
    Image { width: w, height: h, data: out }
}

/// Samples a rotated, scaled square window with bilinear interpolation.
///
/// `origin` is the source position of output pixel (0, 0); output pixel
/// `(u, v)` reads `origin + (u * s) * x_axis + (v * s) * y_axis` where
/// `s = side_src / side_dst` and `y_axis` is `x_axis` turned by +90 degrees.
/// Every sample must lie within the source extended by a 2-pixel mirror pad.
pub fn affine_sample<T: Pixel>(
    img: &Image<T>,
    origin: Point,
    x_axis: Point,
    side_src: f64,
    side_dst: usize,
) -> Result<Image<T>> {
    let len = x_axis.norm();
    if !(side_src > 0.0) || len == 0.0 || !len.is_finite() || side_dst == 0 {
        return Err(PalmError::Dimension("affine_sample needs positive side and nonzero axis".into()));
    }
    let ux = x_axis.scale(1.0 / len);
    let uy = ux.perp();
    let step = side_src / side_dst as f64;
    let (w, h) = (img.width as f64, img.height as f64);
    let pad = 2.0;
    // corners bound every sample since the map is affine
    for (u, v) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)] {
        let span = (side_dst - 1) as f64 * step;
        let p = origin.add(ux.scale(u * span)).add(uy.scale(v * span));
        if p.x < -pad || p.y < -pad || p.x > w - 1.0 + pad || p.y > h - 1.0 + pad {
            return Err(PalmError::OutOfBounds { x: p.x, y: p.y });
        }
    }
    Ok(Image::from_fn(side_dst, side_dst, |u, v| {
        let p = origin.add(ux.scale(u as f64 * step)).add(uy.scale(v as f64 * step));
        T::from_f64(img.sample_bilinear(p.x, p.y))
    }))
}

/// Catmull-Rom cubic (a = -0.5).
#[inline]
pub fn cubic_weight(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x < 1.0 {
        (A + 2.0) * x * x * x - (A + 3.0) * x * x + 1.0
    } else if x < 2.0 {
        A * x * x * x - 5.0 * A * x * x + 8.0 * A * x - 4.0 * A
    } else {
        0.0
    }
}

/// Per-output-sample tap lists for one axis. Downscaling widens the kernel
/// by the scale factor (antialiased resampling); weights are normalized.
fn resample_taps(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = dst as f64 / src as f64;
    let stretch = if scale < 1.0 { 1.0 / scale } else { 1.0 };
    let support = 2.0 * stretch;
    (0..dst)
        .map(|i| {
            let center = (i as f64 + 0.5) / scale - 0.5;
            let lo = (center - support).floor() as isize;
            let hi = (center + support).ceil() as isize;
            let mut taps: Vec<(usize, f64)> = Vec::new();
            let mut total = 0.0;
            for j in lo..=hi {
                let wgt = cubic_weight((j as f64 - center) / stretch);
                if wgt == 0.0 {
                    continue;
                }
                total += wgt;
                let idx = mirror_index(j, src);
                match taps.iter_mut().find(|(k, _)| *k == idx) {
                    Some(t) => t.1 += wgt,
                    None => taps.push((idx, wgt)),
                }
            }
            for t in &mut taps {
                t.1 /= total;
            }
            taps
        })
        .collect()
}

/// Separable Catmull-Rom bicubic resize to `w`x`h`.
pub fn resize_bicubic<T: Pixel>(img: &Image<T>, w: usize, h: usize) -> Image<T> {
    assert!(w >= 1 && h >= 1, "target size must be positive");
    if (w, h) == img.dims() {
        return img.clone();
    }
    let xt = resample_taps(img.width, w);
    let yt = resample_taps(img.height, h);
    // horizontal pass into f64
    let mut tmp = vec![0.0; w * img.height];
    for y in 0..img.height {
        let row = &img.data[y * img.width..(y + 1) * img.width];
        for (x, taps) in xt.iter().enumerate() {
            tmp[y * w + x] = taps.iter().map(|&(i, wt)| row[i].to_f64() * wt).sum();
        }
    }
    Image::from_fn(w, h, |x, y| {
        T::from_f64(yt[y].iter().map(|&(i, wt)| tmp[i * w + x] * wt).sum())
    })
}

/// Reads a binary PGM (`P5`) file with maxval <= 255.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    decode_pgm(&fs::read(path)?)
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        // skip whitespace and comments
        while pos < bytes.len() {
            match bytes[pos] {
                b'#' => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err(PalmError::Format("truncated PGM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(PalmError::Format(format!("expected PGM magic P5, found {}", fields[0])));
    }
    let parse = |s: &str| -> Result<usize> {
        s.parse().map_err(|_| PalmError::Format(format!("bad PGM header field `{s}`")))
    };
    let (width, height, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(PalmError::Format(format!("unsupported PGM maxval {maxval}")));
    }
    // exactly one whitespace byte separates header from raster
    pos += 1;
    let n = width * height;
    if bytes.len() < pos + n {
        return Err(PalmError::Format("truncated PGM raster".into()));
    }
    let raw = &bytes[pos..pos + n];
    let data = if maxval == 255 {
        raw.to_vec()
    } else {
        raw.iter().map(|&v| u8::from_f64(f64::from(v) * 255.0 / maxval as f64)).collect()
    };
    Image::from_vec(width, height, data)
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

pub fn write_pgm(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_pgm(img))?;
    Ok(())
}
