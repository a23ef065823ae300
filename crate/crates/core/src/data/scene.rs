use serde::{Deserialize, Serialize};

use super::FireClass;
use crate::error::{Error, Result};

/// Per-pixel geodetic coordinates of pixel centers, in degrees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geolocation {
    pub lat: Vec<f64>,
    pub lon: Vec<f64>,
}

/// A multispectral raster with optional ground truth.
///
/// Band data is band-major (`[C][H][W]`), row-major within each plane.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub height: usize,
    pub width: usize,
    /// Band centers in µm, one per band.
    pub wavelengths: Vec<f32>,
    /// Spectral radiance, W·m⁻²·sr⁻¹·µm⁻¹.
    pub bands: Vec<f32>,
    /// Fire radiative power per pixel, MW.
    pub frp: Option<Vec<f32>>,
    /// [`FireClass`] codes.
    pub class_mask: Option<Vec<u8>>,
    pub geo: Option<Geolocation>,
}

impl Scene {
    pub fn new(height: usize, width: usize, wavelengths: Vec<f32>, bands: Vec<f32>) -> Result<Self> {
        let s = Self {
            height,
            width,
            wavelengths,
            bands,
            frp: None,
            class_mask: None,
            geo: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn channels(&self) -> usize {
        self.wavelengths.len()
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn band(&self, c: usize) -> &[f32] {
        let n = self.pixels();
        &self.bands[c * n..(c + 1) * n]
    }

    /// Index of the band whose center is closest to `wavelength`, if within
    /// `tol` µm.
    pub fn band_near(&self, wavelength: f32, tol: f32) -> Option<usize> {
        self.wavelengths
            .iter()
            .enumerate()
            .map(|(i, &w)| (i, (w - wavelength).abs()))
            .filter(|&(_, d)| d <= tol)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }

    /// Checks every structural and ground-truth invariant.
    pub fn validate(&self) -> Result<()> {
        let n = self.pixels();
        if self.channels() == 0 || n == 0 {
            return Err(Error::data(format!(
                "scene must have bands and pixels, got {}×{}×{}",
                self.height,
                self.width,
                self.channels()
            )));
        }
        if self.bands.len() != n * self.channels() {
            return Err(Error::dim(format!(
                "{} band values for {}×{}×{}",
                self.bands.len(),
                self.height,
                self.width,
                self.channels()
            )));
        }
        if let Some(w) = self.wavelengths.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::data(format!("invalid wavelength {w}")));
        }
        if let Some(frp) = &self.frp {
            if frp.len() != n {
                return Err(Error::dim(format!("FRP plane has {} values for {n} pixels", frp.len())));
            }
            if let Some(v) = frp.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(Error::data(format!("FRP value {v} is not a finite non-negative number")));
            }
        }
        if let Some(mask) = &self.class_mask {
            if mask.len() != n {
                return Err(Error::dim(format!("class mask has {} values for {n} pixels", mask.len())));
            }
            if let Some(c) = mask.iter().find(|&&c| FireClass::from_code(c).is_none()) {
                return Err(Error::Label(format!("class code {c} outside 0..=3")));
            }
            if let Some(frp) = &self.frp {
                if let Some(i) = (0..n).find(|&i| mask[i] == 0 && frp[i] != 0.0) {
                    return Err(Error::data(format!(
                        "pixel {i} is NoFire but carries FRP {}",
                        frp[i]
                    )));
                }
            }
        }
        if let Some(geo) = &self.geo {
            if geo.lat.len() != n || geo.lon.len() != n {
                return Err(Error::dim("geolocation planes do not match the scene size"));
            }
        }
        Ok(())
    }
}
