use serde::{Deserialize, Serialize};

use super::scene::Scene;
use super::FireClass;
use crate::error::{Error, Result};
use crate::synth::planck::brightness_temperature;

/// Center of the MWIR band used for thresholding, µm.
pub const MWIR_WAVELENGTH_UM: f32 = 3.755;

/// Brightness-temperature class boundaries in kelvin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassThresholds {
    pub smolder_k: f64,
    pub flame_k: f64,
}

impl Default for ClassThresholds {
    fn default() -> Self {
        Self {
            smolder_k: 500.0,
            flame_k: 800.0,
        }
    }
}

impl ClassThresholds {
    /// Class of a single MWIR radiance sample.
    pub fn classify(&self, radiance: f64, sensor_max: f64) -> FireClass {
        if radiance >= sensor_max {
            return FireClass::Saturated;
        }
        if radiance <= 0.0 || !radiance.is_finite() {
            return FireClass::NoFire;
        }
        let t = brightness_temperature(MWIR_WAVELENGTH_UM as f64, radiance).unwrap_or(0.0);
        if t >= self.flame_k {
            FireClass::Flaming
        } else if t >= self.smolder_k {
            FireClass::Smoldering
        } else {
            FireClass::NoFire
        }
    }
}

/// Per-pixel classes from the 3.755 µm band's brightness temperature.
/// Pixels at or above `sensor_max` radiance are Saturated regardless of
/// temperature.
pub fn derive_class_mask(scene: &Scene, thresholds: &ClassThresholds, sensor_max: f64) -> Result<Vec<u8>> {
    let band = scene.band_near(MWIR_WAVELENGTH_UM, 0.05).ok_or_else(|| {
        Error::config(format!(
            "scene has no MWIR band near {MWIR_WAVELENGTH_UM} µm (bands: {:?})",
            scene.wavelengths
        ))
    })?;
    Ok(scene
        .band(band)
        .iter()
        .map(|&r| thresholds.classify(r as f64, sensor_max).code())
        .collect())
}
