pub mod cli;
pub mod contourcode;
pub mod error;
pub mod eval;
pub mod gallery;
pub mod matcher;
pub mod nsct;
pub mod pipeline;
pub mod raster;
pub mod roi;
pub mod synth;

pub use error::{PalmError, Result};
