use std::io;

use thiserror::Error;

/// Errors produced anywhere in the palmprint pipeline.
#[derive(Debug, Error)]
pub enum PalmError {
    #[error("invalid image dimensions {width}x{height} for {len} pixels")]
    BadDimensions { width: usize, height: usize, len: usize },
    #[error("mask has no foreground pixel")]
    EmptyMask,
    #[error("kernel dimensions must be odd, got {rows}x{cols}")]
    BadKernel { rows: usize, cols: usize },
    #[error("sample point ({x:.2}, {y:.2}) falls outside the source image")]
    OutOfBounds { x: f64, y: f64 },
    #[error("expected 4 finger valleys, found {found}; check hand presentation")]
    ValleyCount { found: usize },
    #[error("degenerate polynomial fit over {points} midpoints")]
    DegenerateFit { points: usize },
    #[error("ambiguous landmark ordering: valleys {first} and {second} tie as the thumb valley")]
    AmbiguousOrdering { first: usize, second: usize },
    #[error("no scanline intersects the palm between x_s={start:.1} and x_t={end:.1}")]
    EmptyRange { start: f64, end: f64 },
    #[error("format error: {0}")]
    Format(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("crop margins {tx}x{ty} leave no central region in a {width}x{height} code")]
    CropTooLarge { tx: usize, ty: usize, width: usize, height: usize },
    #[error("parameter mismatch: {0}")]
    ParamMismatch(String),
    #[error("unsupported gallery version {found}, this build reads version {expected}")]
    Version { found: u32, expected: u32 },
    #[error("unknown identity `{0}`")]
    UnknownIdentity(String),
    #[error("gallery is empty")]
    EmptyGallery,
    #[error("protocol needs session {0} samples but none are present")]
    MissingSession(u8),
    #[error("genuine and imposter score lists must both be nonempty")]
    EmptyScores,
    #[error("identity `{0}` has fewer than 2 samples")]
    InsufficientSamples(String),
    #[error("invalid synthetic spec: {0}")]
    SpecInvalid(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = PalmError> = std::result::Result<T, E>;
