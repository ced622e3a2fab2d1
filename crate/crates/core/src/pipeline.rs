//! ROI band -> contour code -> binary hash vector, with one fixed set of
//! parameters shared by enrollment and matching.

use sha2::{Digest, Sha256};

use crate::contourcode::{self, BinaryCodeMap, ContourCode, Neighborhood};
use crate::error::{PalmError, Result};
use crate::gallery::GalleryManifest;
use crate::nsct::{self, FilterBank};
use crate::raster::GrayImage;
use crate::roi::RoiSet;

/// Default crop margin and translation search radius.
pub const DEFAULT_MARGIN: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub bank: FilterBank,
    pub tx: usize,
    pub ty: usize,
    pub blur: Neighborhood,
}

impl Default for Pipeline {
    fn default() -> Self {
        Self {
            bank: FilterBank::default_bank(),
            tx: DEFAULT_MARGIN,
            ty: DEFAULT_MARGIN,
            blur: Neighborhood::Four,
        }
    }
}

impl Pipeline {
    /// Pipeline matching a stored gallery: the built-in bank of the
    /// gallery's order unless `bank` is given, verified by config hash.
    pub fn for_gallery(manifest: &GalleryManifest, bank: Option<FilterBank>) -> Result<Self> {
        let p = Self {
            bank: bank.unwrap_or_else(|| FilterBank::for_order(manifest.k)),
            tx: manifest.t_x,
            ty: manifest.t_y,
            blur: manifest.blur,
        };
        let (w, h) = manifest.code_dims();
        let hash = p.config_hash(w, h);
        if hash != manifest.config_hash {
            return Err(PalmError::ParamMismatch(format!(
                "gallery config {} does not match pipeline config {hash}",
                manifest.config_hash
            )));
        }
        Ok(p)
    }

    pub fn with_order(k: u32) -> Self {
        Self { bank: FilterBank::for_order(k), ..Self::default() }
    }

    pub fn k(&self) -> u32 {
        self.bank.k()
    }

    /// Short hash of every parameter that changes the stored bits: ROI
    /// size, margins, blur and the filter taps.
    pub fn config_hash(&self, roi_width: usize, roi_height: usize) -> String {
        let mut h = Sha256::new();
        h.update(format!("roi={roi_width}x{roi_height};t={},{};blur={};", self.tx, self.ty, self.blur));
        h.update(self.bank.to_text());
        hex::encode(&h.finalize()[..8])
    }

    pub fn code_band(&self, band: &GrayImage) -> Result<ContourCode> {
        let (w, h) = band.dims();
        if 2 * self.tx >= w || 2 * self.ty >= h {
            return Err(PalmError::CropTooLarge { tx: self.tx, ty: self.ty, width: w, height: h });
        }
        Ok(contourcode::encode(&nsct::decompose(band, &self.bank)))
    }

    /// Full contour codes of every band.
    pub fn codes(&self, rois: &RoiSet) -> Result<Vec<ContourCode>> {
        rois.bands.iter().map(|b| self.code_band(b)).collect()
    }

    /// Blurred gallery hash vector of one band code.
    pub fn gallery_map(&self, code: &ContourCode) -> Result<BinaryCodeMap> {
        let h = contourcode::hash_encode(code, self.tx, self.ty)?;
        Ok(contourcode::blur(&h, self.blur))
    }
}
