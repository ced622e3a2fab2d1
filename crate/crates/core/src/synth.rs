//! Seeded ground-truth generators: multispectral palm ROIs of synthetic
//! identities, and hand silhouettes with known valley landmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{PalmError, Result};
use crate::gallery::Entry;
use rayon::prelude::*;

use crate::raster::{BinaryImage, FloatImage, GrayImage, Point};
use crate::roi::{axis_angle, Landmarks, RoiFrame, RoiSet, ROI_SIDE};

/// Mixes `seed` and `index` into an independent stream seed.
pub fn stream_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A dark quadratic Bezier curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stroke {
    pub start: Point,
    pub control: Point,
    pub end: Point,
    /// Full width at about half depth, pixels.
    pub width: f64,
    /// Peak darkening, grey levels.
    pub contrast: f64,
}

impl Stroke {
    fn at(&self, t: f64) -> Point {
        let u = 1.0 - t;
        self.start.scale(u * u).add(self.control.scale(2.0 * u * t)).add(self.end.scale(t * t))
    }

    fn polyline(&self, segments: usize) -> Vec<Point> {
        (0..=segments).map(|i| self.at(i as f64 / segments as f64)).collect()
    }
}

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = b.sub(a);
    let len2 = ab.dot(ab);
    let t = if len2 > 0.0 { (p.sub(a).dot(ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    p.dist(a.add(ab.scale(t)))
}

/// Accumulates `strokes` as darkening into a grid covering `[lo, lo + n/res)`.
fn render_strokes(strokes: &[Stroke], n: usize, lo: f64, res: f64) -> FloatImage {
    let mut out = FloatImage::new(n, n);
    for s in strokes {
        let poly = s.polyline(24);
        let sigma = s.width / 2.355;
        let reach = 3.5 * sigma + 0.5;
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for p in &poly {
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        let to_idx = |v: f64| ((v - lo) * res).floor().clamp(0.0, n as f64 - 1.0) as usize;
        for iy in to_idx(y0 - reach)..=to_idx(y1 + reach) {
            for ix in to_idx(x0 - reach)..=to_idx(x1 + reach) {
                let p = Point::new(lo + (ix as f64 + 0.5) / res, lo + (iy as f64 + 0.5) / res);
                let d = poly.windows(2).map(|w| segment_distance(p, w[0], w[1])).fold(f64::MAX, f64::min);
                if d < reach {
                    let v = out.get(ix, iy) + s.contrast * (-(d * d) / (2.0 * sigma * sigma)).exp();
                    out.set(ix, iy, v);
                }
            }
        }
    }
    out
}

/// Per-sample presentation variation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jitter {
    /// Uniform translation bound per axis, pixels.
    pub max_shift: f64,
    /// Relative contrast variation.
    pub contrast: f64,
    /// Additive Gaussian noise sigma, grey levels.
    pub noise_sigma: f64,
}

impl Default for Jitter {
    fn default() -> Self {
        Self { max_shift: 1.5, contrast: 0.1, noise_sigma: 2.0 }
    }
}

impl Jitter {
    pub const NONE: Jitter = Jitter { max_shift: 0.0, contrast: 0.0, noise_sigma: 0.0 };
}

/// Geometry and appearance of one synthetic identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthIdentitySpec {
    pub seed: u64,
    /// Principal lines and wrinkles, dominant in short-wavelength bands.
    pub lines: Vec<Stroke>,
    /// Broad low-contrast veins, dominant in long-wavelength bands.
    pub veins: Vec<Stroke>,
    /// Mean skin level.
    pub base_level: f64,
    pub jitter: Jitter,
}

const SUPER: f64 = 4.0;
const MARGIN: f64 = 6.0;

fn random_stroke(rng: &mut impl Rng, len: (f64, f64), width: (f64, f64), contrast: (f64, f64), bend: f64) -> Stroke {
    let span = ROI_SIDE as f64;
    let c = Point::new(rng.random_range(-2.0..span + 2.0), rng.random_range(-2.0..span + 2.0));
    let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let half = rng.random_range(len.0..len.1) / 2.0;
    let dir = Point::new(angle.cos(), angle.sin());
    let control = c.add(dir.perp().scale(rng.random_range(-bend..bend) * half));
    Stroke {
        start: c.sub(dir.scale(half)),
        control,
        end: c.add(dir.scale(half)),
        width: rng.random_range(width.0..width.1),
        contrast: rng.random_range(contrast.0..contrast.1),
    }
}

impl SynthIdentitySpec {
    /// Random identity drawn from `seed`.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, u64::MAX));
        let mut lines = Vec::new();
        for _ in 0..rng.random_range(3..=5) {
            lines.push(random_stroke(&mut rng, (30.0, 50.0), (1.6, 2.4), (45.0, 70.0), 0.5));
        }
        for _ in 0..rng.random_range(28..=40) {
            lines.push(random_stroke(&mut rng, (6.0, 16.0), (0.9, 1.4), (25.0, 45.0), 0.3));
        }
        let veins = (0..rng.random_range(4..=7))
            .map(|_| random_stroke(&mut rng, (25.0, 50.0), (3.0, 5.0), (20.0, 35.0), 0.6))
            .collect();
        Self { seed, lines, veins, base_level: rng.random_range(140.0..170.0), jitter: Jitter::default() }
    }

    pub fn with_jitter(mut self, jitter: Jitter) -> Self {
        self.jitter = jitter;
        self
    }
}

/// Darkening rasters of an identity over the ROI domain plus a margin,
/// sampled at `SUPER` points per ROI pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityLayers {
    pub lines: FloatImage,
    pub veins: FloatImage,
}

impl IdentityLayers {
    pub fn render(spec: &SynthIdentitySpec) -> Self {
        let n = ((ROI_SIDE as f64 + 2.0 * MARGIN) * SUPER) as usize;
        Self {
            lines: render_strokes(&spec.lines, n, -MARGIN, SUPER),
            veins: render_strokes(&spec.veins, n, -MARGIN, SUPER),
        }
    }

    /// Line and vein darkening at ROI coordinate `p`, mirror-extended.
    pub fn sample(&self, p: Point) -> (f64, f64) {
        let (x, y) = ((p.x + MARGIN) * SUPER - 0.5, (p.y + MARGIN) * SUPER - 0.5);
        (self.lines.sample_bilinear(x, y), self.veins.sample_bilinear(x, y))
    }
}

/// Line and vein weights of band `b` of `bands`: line-dominant first,
/// vein-dominant last.
pub fn band_weights(b: usize, bands: usize) -> (f64, f64) {
    if bands <= 1 {
        return (1.0, 0.0);
    }
    let v = b as f64 / (bands - 1) as f64;
    (1.0 - 0.8 * v, 0.3 + 0.7 * v)
}

/// Renders `n_samples` jittered multispectral samples of one identity.
pub fn gen_identity_samples(spec: &SynthIdentitySpec, n_samples: usize, n_bands: usize) -> Result<Vec<RoiSet>> {
    if n_bands == 0 {
        return Err(PalmError::SpecInvalid("at least one band is required".into()));
    }
    let j = spec.jitter;
    if !(j.max_shift >= 0.0 && j.max_shift <= 3.0 && j.contrast >= 0.0 && j.contrast < 1.0 && j.noise_sigma >= 0.0) {
        return Err(PalmError::SpecInvalid(format!("jitter out of range: {j:?}")));
    }
    let layers = IdentityLayers::render(spec);
    let n = layers.lines.width();
    let lo = -MARGIN;
    let bands: Vec<FloatImage> = (0..n_bands)
        .map(|b| {
            let (wl, wv) = band_weights(b, n_bands);
            let mut img = FloatImage::new(n, n);
            for ((o, l), v) in img.pixels_mut().iter_mut().zip(layers.lines.pixels()).zip(layers.veins.pixels()) {
                *o = spec.base_level - wl * l - wv * v;
            }
            img
        })
        .collect();
    let noise = Normal::new(0.0, j.noise_sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let labels: Vec<String> = (0..n_bands).map(|b| format!("band{b}")).collect();
    (0..n_samples)
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(spec.seed, s as u64));
            let (jx, jy) = if j.max_shift > 0.0 {
                (rng.random_range(-j.max_shift..=j.max_shift), rng.random_range(-j.max_shift..=j.max_shift))
            } else {
                (0.0, 0.0)
            };
            let gain = 1.0 + if j.contrast > 0.0 { rng.random_range(-j.contrast..=j.contrast) } else { 0.0 };
            let out = bands
                .iter()
                .map(|src| {
                    GrayImage::from_fn(ROI_SIDE, ROI_SIDE, |x, y| {
                        let mut acc = 0.0;
                        for sy in 0..4 {
                            for sx in 0..4 {
                                let px = x as f64 + (sx as f64 + 0.5) / 4.0 - jx;
                                let py = y as f64 + (sy as f64 + 0.5) / 4.0 - jy;
                                acc += src.sample_bilinear((px - lo) * SUPER - 0.5, (py - lo) * SUPER - 0.5);
                            }
                        }
                        let v = spec.base_level + gain * (acc / 16.0 - spec.base_level);
                        let v = if j.noise_sigma > 0.0 { v + noise.sample(&mut rng) } else { v };
                        v.round().clamp(0.0, 255.0) as u8
                    })
                })
                .collect();
            RoiSet::with_labels(out, labels.clone())
        })
        .collect()
}

/// Jitter-free bands of an identity rendered at `side x side` pixels over
/// the ROI domain, for registration experiments at extraction resolution.
pub fn render_identity_bands(spec: &SynthIdentitySpec, side: usize, n_bands: usize) -> Result<Vec<GrayImage>> {
    if n_bands == 0 || side == 0 {
        return Err(PalmError::SpecInvalid("need at least one band and pixel".into()));
    }
    let layers = IdentityLayers::render(spec);
    let step = ROI_SIDE as f64 / side as f64;
    Ok((0..n_bands)
        .map(|b| {
            let (wl, wv) = band_weights(b, n_bands);
            GrayImage::from_fn(side, side, |x, y| {
                let (l, v) = layers.sample(Point::new((x as f64 + 0.5) * step, (y as f64 + 0.5) * step));
                (spec.base_level - wl * l - wv * v).round().clamp(0.0, 255.0) as u8
            })
        })
        .collect())
}

/// Geometry and pose of a synthetic hand.
///
/// The hand is built in a canonical frame at unit scale: palm edge on the
/// line x = 0, fingers pointing toward -x stacked from the pinky at y = 0
/// to the index at y = `palm_width`, thumb hanging off the index side. The
/// pose maps canonical `q` to `translation + scale * R(rotation) * (q' - pivot)`
/// where `q'` is `q` mirrored about the palm midline when `mirrored` is set
/// and the pivot is the palm center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthHandSpec {
    pub seed: u64,
    pub palm_width: f64,
    pub palm_length: f64,
    /// Pinky to index; they tile the palm width.
    pub finger_widths: [f64; 4],
    pub finger_lengths: [f64; 4],
    /// Canonical x of each inter-finger valley bottom, pinky side first.
    pub valley_depths: [f64; 3],
    /// Radius of the rounded valley bottoms.
    pub notch_radius: f64,
    /// Widening of each finger gap per unit distance from its bottom.
    pub notch_flare: f64,
    pub thumb_base: Point,
    /// Thumb direction, degrees from +x toward +y.
    pub thumb_angle: f64,
    pub thumb_length: f64,
    pub thumb_radius: f64,
    /// In-plane rotation, degrees.
    pub rotation: f64,
    pub scale: f64,
    /// Image position of the palm center.
    pub translation: Point,
    pub mirrored: bool,
    pub canvas: (usize, usize),
    pub hand_level: f64,
    pub background_level: f64,
    /// Fraction of pixels replaced by salt or pepper.
    pub salt_pepper: f64,
}

/// A rendered hand and its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthHand {
    pub bands: Vec<GrayImage>,
    /// Noise-free silhouette sampled at pixel centers.
    pub mask: BinaryImage,
    pub landmarks: Landmarks,
    /// Thumb-index valley bottom.
    pub thumb_valley: Point,
    /// True palm width in image pixels.
    pub width: f64,
}

const CANVAS_MARGIN: f64 = 12.0;

impl SynthHandSpec {
    /// Random geometry and pose drawn from `seed`.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 0x4841_4e44));
        let w = 180.0;
        let mut widths = [0.22, 0.25, 0.27, 0.26].map(|f: f64| f + rng.random_range(-0.015..0.015));
        let total: f64 = widths.iter().sum();
        widths.iter_mut().for_each(|f| *f *= w / total);
        let lengths = [0.42, 0.58, 0.64, 0.56].map(|f: f64| (f + rng.random_range(-0.04..0.04)) * w);
        let depths = [0.04, 0.02, 0.05].map(|f: f64| (f + rng.random_range(-0.015..0.015)) * w);
        let spec = Self {
            seed,
            palm_width: w,
            palm_length: rng.random_range(1.0..1.1) * w,
            finger_widths: widths,
            finger_lengths: lengths,
            valley_depths: depths,
            notch_radius: 0.03 * w,
            notch_flare: rng.random_range(0.05..0.08),
            thumb_base: Point::new(rng.random_range(0.68..0.74) * w, 0.9 * w),
            thumb_angle: rng.random_range(138.0..150.0),
            thumb_length: rng.random_range(0.7..0.8) * w,
            thumb_radius: rng.random_range(0.12..0.14) * w,
            rotation: 0.0,
            scale: 1.0,
            translation: Point::new(0.0, 0.0),
            mirrored: false,
            canvas: (1, 1),
            hand_level: rng.random_range(150.0..185.0),
            background_level: rng.random_range(10.0..35.0),
            salt_pepper: 0.002,
        };
        spec.posed(stream_seed(seed, 0x504f_5345))
    }

    /// Same hand under a random pose: rotation within +-30 degrees, scale in
    /// [0.8, 1.25], random placement on a canvas that fits it.
    pub fn posed(self, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rotation = rng.random_range(-30.0..=30.0);
        let scale = rng.random_range(0.8..=1.25);
        let slack = (rng.random_range(0.0..80.0), rng.random_range(0.0..80.0));
        let place = (rng.random::<f64>(), rng.random::<f64>());
        self.with_pose(rotation, scale).fit_canvas(slack, place)
    }

    /// Sets rotation and scale, keeping the rest.
    pub fn with_pose(mut self, rotation: f64, scale: f64) -> Self {
        self.rotation = rotation;
        self.scale = scale;
        self
    }

    /// Sizes the canvas to the posed hand plus a margin and `slack` pixels,
    /// placing the hand at fraction `place` of the slack.
    pub fn fit_canvas(mut self, slack: (f64, f64), place: (f64, f64)) -> Self {
        self.translation = Point::new(0.0, 0.0);
        let (lo, hi) = self.image_extent();
        let span = hi.sub(lo);
        self.canvas = (
            (span.x + 2.0 * CANVAS_MARGIN + slack.0).ceil() as usize,
            (span.y + 2.0 * CANVAS_MARGIN + slack.1).ceil() as usize,
        );
        self.translation = Point::new(
            CANVAS_MARGIN - lo.x + place.0 * slack.0,
            CANVAS_MARGIN - lo.y + place.1 * slack.1,
        );
        self
    }

    fn pivot(&self) -> Point {
        Point::new(self.palm_length / 2.0, self.palm_width / 2.0)
    }

    fn mirror(&self, q: Point) -> Point {
        if self.mirrored {
            Point::new(q.x, self.palm_width - q.y)
        } else {
            q
        }
    }

    /// Canonical to image coordinates.
    pub fn forward(&self, q: Point) -> Point {
        let d = self.mirror(q).sub(self.pivot()).scale(self.scale);
        let (s, c) = self.rotation.to_radians().sin_cos();
        self.translation.add(Point::new(c * d.x - s * d.y, s * d.x + c * d.y))
    }

    /// Image to canonical coordinates.
    pub fn inverse(&self, p: Point) -> Point {
        let d = p.sub(self.translation);
        let (s, c) = self.rotation.to_radians().sin_cos();
        let r = Point::new(c * d.x + s * d.y, -s * d.x + c * d.y).scale(1.0 / self.scale);
        self.mirror(r.add(self.pivot()))
    }

    fn finger_bounds(&self) -> [f64; 5] {
        let mut a = [0.0; 5];
        for j in 0..4 {
            a[j + 1] = a[j] + self.finger_widths[j];
        }
        a
    }

    fn thumb_axis(&self) -> (Point, Point) {
        let t = self.thumb_angle.to_radians();
        let dir = Point::new(t.cos(), t.sin());
        (self.thumb_base, self.thumb_base.add(dir.scale(self.thumb_length)))
    }

    /// Canonical bounding box of the silhouette.
    fn canonical_extent(&self) -> (Point, Point) {
        let (_, tip) = self.thumb_axis();
        let r = self.thumb_radius;
        let reach = self.finger_lengths.iter().copied().fold(0.0, f64::max);
        (
            Point::new((-reach).min(tip.x - r) - 1.0, -1.0),
            Point::new(self.palm_length + 1.0, (tip.y + r).max(self.palm_width) + 1.0),
        )
    }

    fn image_extent(&self) -> (Point, Point) {
        let (a, b) = self.canonical_extent();
        let corners = [a, Point::new(b.x, a.y), b, Point::new(a.x, b.y)].map(|q| self.forward(q));
        let lo = corners.iter().fold(Point::new(f64::MAX, f64::MAX), |m, p| Point::new(m.x.min(p.x), m.y.min(p.y)));
        let hi = corners.iter().fold(Point::new(f64::MIN, f64::MIN), |m, p| Point::new(m.x.max(p.x), m.y.max(p.y)));
        (lo, hi)
    }

    /// Whether canonical point `q` is on the hand.
    pub fn contains(&self, q: Point) -> bool {
        let (w, l) = (self.palm_width, self.palm_length);
        let a = self.finger_bounds();
        let r = self.notch_radius;
        for (j, &v) in self.valley_depths.iter().enumerate() {
            let xc = v - r;
            let dy = (q.y - a[j + 1]).abs();
            if (q.x <= xc && dy <= r + self.notch_flare * (xc - q.x)) || q.dist(Point::new(xc, a[j + 1])) <= r {
                return false;
            }
        }
        let (pocket, _) = self.thumb_pocket();
        if q.dist(pocket) <= r {
            return false;
        }
        let rc = 0.12 * w;
        let in_palm = q.x >= 0.0 && q.x <= l && q.y >= 0.0 && q.y <= w && {
            let cy = q.y.clamp(rc, w - rc);
            q.x <= l - rc || q.dist(Point::new(l - rc, cy)) <= rc
        };
        if in_palm {
            return true;
        }
        for j in 0..4 {
            let hw = (a[j + 1] - a[j]) / 2.0;
            let tip = Point::new(-self.finger_lengths[j] + hw, a[j] + hw);
            if (q.x <= 0.0 && q.x >= tip.x && q.y >= a[j] && q.y <= a[j + 1]) || q.dist(tip) <= hw {
                return true;
            }
        }
        let (b0, b1) = self.thumb_axis();
        segment_distance(q, b0, b1) <= self.thumb_radius
    }

    /// Canonical ground-truth valley bottoms, pinky side first.
    pub fn canonical_valleys(&self) -> [Point; 3] {
        let a = self.finger_bounds();
        [0, 1, 2].map(|j| Point::new(self.valley_depths[j], a[j + 1]))
    }

    /// Where the upper thumb edge meets the palm's index-side edge.
    fn thumb_crotch(&self) -> (Point, Point) {
        let (b0, b1) = self.thumb_axis();
        let dir = b1.sub(b0).scale(1.0 / self.thumb_length);
        let mut n = dir.perp();
        if n.y > 0.0 {
            n = n.scale(-1.0);
        }
        let edge = b0.add(n.scale(self.thumb_radius));
        (edge.add(dir.scale((self.palm_width - edge.y) / dir.y)), dir)
    }

    /// Center of the disc rounding the thumb crotch and the unit bisector
    /// of the crotch opening.
    fn thumb_pocket(&self) -> (Point, Point) {
        let (crotch, dir) = self.thumb_crotch();
        let b = Point::new(-1.0, 0.0).add(dir);
        let b = b.scale(1.0 / b.norm());
        (crotch.add(b.scale(0.5 * self.notch_radius)), b)
    }

    /// Canonical thumb-index valley bottom: deepest point of the rounded
    /// crotch along its bisector.
    pub fn canonical_thumb_valley(&self) -> Point {
        let (c, b) = self.thumb_pocket();
        c.sub(b.scale(self.notch_radius))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PalmError::SpecInvalid(m));
        if !(self.scale > 0.0 && self.scale.is_finite()) || self.rotation.abs() > 90.0 {
            return bad(format!("pose out of range: rotation {} scale {}", self.rotation, self.scale));
        }
        let total: f64 = self.finger_widths.iter().sum();
        if self.finger_widths.iter().any(|&f| f <= 0.0) || (total - self.palm_width).abs() > 1e-6 * self.palm_width {
            return bad("finger widths must be positive and tile the palm width".into());
        }
        if self.finger_lengths.iter().any(|&f| f <= self.notch_radius) {
            return bad("fingers shorter than the valley radius".into());
        }
        let gap = 2.0 * self.notch_radius * self.scale;
        if gap < 5.0 {
            return bad(format!("fingers separated by {gap:.2} px at the base, need 5"));
        }
        let t = self.thumb_angle.to_radians();
        if t.sin() <= 0.1 || self.thumb_radius <= 0.0 || self.thumb_length <= 0.0 {
            return bad("thumb must point away from the palm".into());
        }
        let (crotch, _) = self.thumb_crotch();
        if crotch.x <= self.valley_depths[2] + self.notch_radius || crotch.x >= self.palm_length {
            return bad("thumb crotch does not lie along the palm edge".into());
        }
        if !(0.0..1.0).contains(&self.salt_pepper) || self.hand_level <= self.background_level {
            return bad("appearance out of range".into());
        }
        let (lo, hi) = self.image_extent();
        if lo.x < 0.0 || lo.y < 0.0 || hi.x > self.canvas.0 as f64 || hi.y > self.canvas.1 as f64 {
            return bad("hand does not fit on the canvas".into());
        }
        Ok(())
    }

    /// Ground-truth landmarks in image coordinates.
    pub fn landmarks(&self) -> Landmarks {
        let [p1, p2, p3] = self.canonical_valleys().map(|q| self.forward(q));
        Landmarks { p1, p2, p3, palm_width_bar: self.palm_width * self.scale, theta: axis_angle(p1, p2) }
    }

    /// Ground-truth ROI frame in canonical coordinates.
    fn canonical_frame(&self) -> RoiFrame {
        let [p1, p2, _] = self.canonical_valleys();
        let lm = Landmarks { p1, p2, p3: p1, palm_width_bar: self.palm_width, theta: 0.0 };
        RoiFrame::new(&lm, self.canonical_thumb_valley())
    }
}

/// Plain single-band hand on a dark background.
pub fn gen_hand(spec: &SynthHandSpec) -> Result<SynthHand> {
    render_hand(spec, None, 1)
}

/// Multispectral hand whose palm carries the identity's line and vein
/// layers, placed so the ground-truth ROI sees them at ROI scale.
pub fn gen_hand_bands(spec: &SynthHandSpec, identity: &SynthIdentitySpec, n_bands: usize) -> Result<SynthHand> {
    render_hand(spec, Some(identity), n_bands)
}

/// Darkening never pushes skin below this many levels under the hand level.
const MAX_DARKENING: f64 = 70.0;

fn render_hand(spec: &SynthHandSpec, identity: Option<&SynthIdentitySpec>, n_bands: usize) -> Result<SynthHand> {
    spec.validate()?;
    if n_bands == 0 {
        return Err(PalmError::SpecInvalid("at least one band is required".into()));
    }
    let (cw, ch) = spec.canvas;
    let layers = identity.map(IdentityLayers::render);
    let frame = spec.canonical_frame();
    let step = frame.side / ROI_SIDE as f64;
    let origin = frame.origin(ROI_SIDE);
    let yaxis = frame.x_axis.perp();
    let to_roi = |q: Point| {
        let d = q.sub(origin);
        Point::new(d.dot(frame.x_axis) / step + 0.5, d.dot(yaxis) / step + 0.5)
    };
    // Texture fades out just outside the ROI and near the contour so it
    // never changes the silhouette.
    let band = 0.03 * spec.palm_width;
    let inner_x = spec.valley_depths.iter().copied().fold(f64::MIN, f64::max) + spec.notch_radius;
    let fade = |p: Point, q: Point| {
        let side = ROI_SIDE as f64;
        let outside = (-p.x).max(p.x - side).max(-p.y).max(p.y - side);
        let edge = q.y.min(spec.palm_width - q.y).min(q.x - inner_x);
        (1.0 - (outside - 2.0) / 3.0).clamp(0.0, 1.0) * ((edge - band) / band).clamp(0.0, 1.0)
    };
    let weights: Vec<(f64, f64)> = (0..n_bands).map(|b| band_weights(b, n_bands)).collect();
    const SUB: [f64; 2] = [-0.25, 0.25];
    let rows: Vec<(Vec<bool>, Vec<Vec<f64>>)> = (0..ch)
        .into_par_iter()
        .map(|y| {
            let mut mask = vec![false; cw];
            let mut vals = vec![vec![0.0; cw]; n_bands];
            for x in 0..cw {
                let p = Point::new(x as f64, y as f64);
                let q = spec.inverse(p);
                mask[x] = spec.contains(q);
                let mut cover = 0.0;
                for sy in SUB {
                    for sx in SUB {
                        if spec.contains(spec.inverse(Point::new(p.x + sx, p.y + sy))) {
                            cover += 0.25;
                        }
                    }
                }
                let (lines, veins) = match &layers {
                    Some(layers) if cover > 0.0 => {
                        let t = to_roi(q);
                        let f = fade(t, q);
                        if f > 0.0 {
                            let (l, v) = layers.sample(t);
                            (l * f, v * f)
                        } else {
                            (0.0, 0.0)
                        }
                    }
                    _ => (0.0, 0.0),
                };
                let skin = identity.map_or(spec.hand_level, |id| id.base_level.max(spec.hand_level));
                for (b, &(wl, wv)) in weights.iter().enumerate() {
                    let dark = MAX_DARKENING * ((wl * lines + wv * veins) / MAX_DARKENING).tanh();
                    vals[b][x] = spec.background_level + cover * (skin - dark - spec.background_level);
                }
            }
            (mask, vals)
        })
        .collect();
    let mut mask = BinaryImage::new(cw, ch);
    let mut bands: Vec<FloatImage> = (0..n_bands).map(|_| FloatImage::new(cw, ch)).collect();
    for (y, (m, vals)) in rows.into_iter().enumerate() {
        for x in 0..cw {
            mask.set(x, y, m[x]);
            for b in 0..n_bands {
                bands[b].set(x, y, vals[b][x]);
            }
        }
    }
    let bands = bands
        .into_iter()
        .enumerate()
        .map(|(b, img)| {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(spec.seed, 0x5341_4c54 + b as u64));
            let noise = Normal::new(0.0, 2.0).expect("finite sigma");
            GrayImage::from_fn(cw, ch, |x, y| {
                let v = img.get(x, y) + noise.sample(&mut rng);
                if rng.random::<f64>() < spec.salt_pepper {
                    if rng.random::<bool>() { 255 } else { 0 }
                } else {
                    v.round().clamp(0.0, 255.0) as u8
                }
            })
        })
        .collect();
    Ok(SynthHand {
        bands,
        mask,
        landmarks: spec.landmarks(),
        thumb_valley: spec.forward(spec.canonical_thumb_valley()),
        width: spec.palm_width * spec.scale,
    })
}

/// Seed of identity `i` of a corpus drawn from `seed`.
pub fn identity_seed(seed: u64, i: usize) -> u64 {
    stream_seed(seed ^ 0x4944_454e_5449_5459, i as u64)
}

/// Identity label used for corpus identity `i`.
pub fn identity_label(i: usize) -> String {
    format!("id{i:04}")
}

/// `ids x samples` jittered multispectral ROIs with default jitter, in
/// identity-major order; the first half of each identity's samples is
/// session 1.
pub fn roi_corpus(ids: usize, samples: usize, bands: usize, seed: u64) -> Result<Vec<(Entry, RoiSet)>> {
    let per_id: Vec<Vec<RoiSet>> = (0..ids)
        .into_par_iter()
        .map(|i| gen_identity_samples(&SynthIdentitySpec::random(identity_seed(seed, i)), samples, bands))
        .collect::<Result<_>>()?;
    Ok(per_id
        .into_iter()
        .enumerate()
        .flat_map(|(i, sets)| {
            sets.into_iter()
                .enumerate()
                .map(move |(s, set)| (Entry::new(identity_label(i), s as u32, session_of(s, samples)), set))
        })
        .collect())
}

/// Session of sample `s` out of `n`: first half session 1, rest session 2.
pub fn session_of(s: usize, n: usize) -> u8 {
    if s < n / 2 || n == 1 {
        1
    } else {
        2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_zero_jitter() {
        let spec = SynthIdentitySpec::random(5);
        assert_eq!(spec, SynthIdentitySpec::random(5));
        let a = gen_identity_samples(&spec, 3, 4).unwrap();
        assert_eq!(a, gen_identity_samples(&spec, 3, 4).unwrap());
        assert_ne!(a[0].bands[0], a[1].bands[0]);
        assert_eq!(a[0].bands[0].dims(), (32, 32));
        let still = gen_identity_samples(&spec.clone().with_jitter(Jitter::NONE), 2, 2).unwrap();
        assert_eq!(still[0], still[1]);
        assert!(gen_identity_samples(&spec, 1, 0).is_err());
    }

    #[test]
    fn bands_differ_and_lines_are_dark() {
        let spec = SynthIdentitySpec::random(1).with_jitter(Jitter::NONE);
        let s = &gen_identity_samples(&spec, 1, 4).unwrap()[0];
        assert_ne!(s.bands[0], s.bands[3]);
        let mean = |img: &GrayImage| img.pixels().iter().map(|&v| v as f64).sum::<f64>() / 1024.0;
        assert!(mean(&s.bands[0]) < spec.base_level);
    }

    #[test]
    fn sessions_split_in_half() {
        let s: Vec<u8> = (0..6).map(|i| session_of(i, 6)).collect();
        assert_eq!(s, vec![1, 1, 1, 2, 2, 2]);
    }

    #[test]
    fn hand_landmarks_sit_at_valley_bottoms() {
        let spec = SynthHandSpec::random(2);
        let hand = gen_hand(&spec).unwrap();
        for p in [hand.landmarks.p1, hand.landmarks.p2, hand.landmarks.p3] {
            let q = spec.inverse(p);
            assert!(!spec.contains(q.sub(Point::new(0.5, 0.0))), "gap before {q:?}");
            assert!(spec.contains(q.add(Point::new(0.5, 0.0))), "hand past {q:?}");
        }
        let q = spec.inverse(hand.thumb_valley);
        assert!(spec.contains(q.add(Point::new(0.5, 0.0))));
        assert_eq!(hand.bands[0].dims(), spec.canvas);
        assert_eq!(hand, gen_hand(&spec).unwrap());
    }

    #[test]
    fn pose_is_a_similarity() {
        let base = SynthHandSpec::random(3).with_pose(0.0, 1.0).fit_canvas((0.0, 0.0), (0.0, 0.0));
        let mut turned = base.clone().with_pose(30.0, 1.0);
        turned.canvas = (2000, 2000);
        turned.translation = Point::new(1000.0, 1000.0);
        let mut still = base.clone();
        still.canvas = turned.canvas;
        still.translation = turned.translation;
        let (a, b) = (still.landmarks(), turned.landmarks());
        let (s, c) = 30f64.to_radians().sin_cos();
        for (p, q) in [(a.p1, b.p1), (a.p2, b.p2), (a.p3, b.p3)] {
            let d = p.sub(still.translation);
            let want = still.translation.add(Point::new(c * d.x - s * d.y, s * d.x + c * d.y));
            assert!(want.dist(q) < 1e-9);
        }
        let big = base.clone().with_pose(0.0, 1.5).fit_canvas((0.0, 0.0), (0.0, 0.0));
        assert_eq!(gen_hand(&big).unwrap().width, 1.5 * gen_hand(&base).unwrap().width);
        let p = Point::new(12.5, -3.0);
        assert!(turned.inverse(turned.forward(p)).dist(p) < 1e-9);
    }

    #[test]
    fn narrow_fingers_gaps_are_rejected() {
        let spec = SynthHandSpec::random(4).with_pose(0.0, 0.4).fit_canvas((0.0, 0.0), (0.0, 0.0));
        assert!(matches!(gen_hand(&spec), Err(PalmError::SpecInvalid(_))));
        let mut off = SynthHandSpec::random(4);
        off.translation = Point::new(-500.0, 0.0);
        assert!(gen_hand(&off).is_err());
    }

    #[test]
    fn render_identity_bands_matches_domain() {
        let spec = SynthIdentitySpec::random(8);
        let bands = render_identity_bands(&spec, 64, 3).unwrap();
        assert_eq!(bands.len(), 3);
        assert!(bands.iter().all(|b| b.dims() == (64, 64)));
        assert_ne!(bands[0], bands[2]);
    }
}
