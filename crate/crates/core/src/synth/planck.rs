//! Blackbody radiance and its inverse.

use crate::error::{Error, Result};

/// First radiation constant for spectral radiance, `2hc²`, in W·µm⁴·m⁻²·sr⁻¹.
pub const C1: f64 = 1.191_042_972_397_188e8;
/// Second radiation constant, `hc/k`, in µm·K.
pub const C2: f64 = 14_387.768_775_039_34;
/// Stefan–Boltzmann constant, W·m⁻²·K⁻⁴.
pub const STEFAN_BOLTZMANN: f64 = 5.670_374_419e-8;

/// Planck spectral radiance `B(λ, T)` in W·m⁻²·sr⁻¹·µm⁻¹.
pub fn planck_radiance(wavelength_um: f64, temperature_k: f64) -> Result<f64> {
    if !(wavelength_um > 0.0 && temperature_k > 0.0) {
        return Err(Error::Domain(format!(
            "Planck radiance needs positive wavelength and temperature, got λ={wavelength_um}, T={temperature_k}"
        )));
    }
    Ok(radiance(wavelength_um, temperature_k))
}

/// Unchecked [`planck_radiance`] for hot loops with validated inputs.
#[inline]
pub(crate) fn radiance(l: f64, t: f64) -> f64 {
    C1 / (l.powi(5) * (C2 / (l * t)).exp_m1())
}

/// Temperature of the blackbody emitting `radiance` at `wavelength_um`.
pub fn brightness_temperature(wavelength_um: f64, radiance: f64) -> Result<f64> {
    if !(wavelength_um > 0.0 && radiance > 0.0) {
        return Err(Error::Domain(format!(
            "brightness temperature needs positive wavelength and radiance, got λ={wavelength_um}, L={radiance}"
        )));
    }
    let l = wavelength_um;
    Ok(C2 / (l * (C1 / (l.powi(5) * radiance)).ln_1p()))
}
