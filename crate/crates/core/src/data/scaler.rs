use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::patch::PATCH_PIXELS;
use super::split::{Partition, Split};
use crate::error::{Error, Result};

/// Per-band MinMax parameters plus the FRP target range.
///
/// A band with `max == min` is degenerate and scales to 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub kind: String,
    pub band_min: Vec<f32>,
    pub band_max: Vec<f32>,
    pub degenerate: Vec<bool>,
    pub frp_min: f32,
    pub frp_max: f32,
    pub frp_degenerate: bool,
}

fn range<'a>(values: impl Iterator<Item = &'a f32>) -> (f32, f32) {
    values.fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Fits MinMax parameters on the training partition only.
pub fn fit_minmax(train: &Partition<'_>) -> Result<ScalerParams> {
    if train.split() != Split::Train {
        return Err(Error::Usage(format!(
            "scaler must be fit on the train split, got {}",
            train.split()
        )));
    }
    let patches = train.patches();
    let Some(first) = patches.first() else {
        return Err(Error::data("cannot fit a scaler on an empty train split"));
    };
    let c = first.channels();
    let mut band_min = vec![f32::INFINITY; c];
    let mut band_max = vec![f32::NEG_INFINITY; c];
    for p in patches {
        if p.channels() != c {
            return Err(Error::dim("train patches disagree on band count"));
        }
        for b in 0..c {
            let (lo, hi) = range(p.data[b * PATCH_PIXELS..(b + 1) * PATCH_PIXELS].iter());
            band_min[b] = band_min[b].min(lo);
            band_max[b] = band_max[b].max(hi);
        }
    }
    let (frp_min, frp_max) = range(patches.iter().filter_map(|p| p.frp.as_deref()).flatten());
    let (frp_min, frp_max) = if frp_min.is_finite() { (frp_min, frp_max) } else { (0.0, 0.0) };
    let degenerate = band_min.iter().zip(&band_max).map(|(a, b)| a == b).collect();
    Ok(ScalerParams {
        kind: "minmax".into(),
        band_min,
        band_max,
        degenerate,
        frp_min,
        frp_max,
        frp_degenerate: frp_min == frp_max,
    })
}

impl ScalerParams {
    pub fn channels(&self) -> usize {
        self.band_min.len()
    }

    fn check(&self, data: &[f32], channels: usize) -> Result<usize> {
        if channels != self.channels() || !data.len().is_multiple_of(channels.max(1)) {
            return Err(Error::dim(format!(
                "scaler fit on {} bands applied to {channels} bands",
                self.channels()
            )));
        }
        Ok(data.len() / channels)
    }

    /// `(x − min)/(max − min)` in place on band-major data.
    pub fn apply(&self, data: &mut [f32], channels: usize) -> Result<()> {
        let plane = self.check(data, channels)?;
        for (b, chunk) in data.chunks_exact_mut(plane).enumerate() {
            if self.degenerate[b] {
                chunk.fill(0.0);
                continue;
            }
            let (lo, span) = (self.band_min[b], self.band_max[b] - self.band_min[b]);
            for v in chunk {
                *v = (*v - lo) / span;
            }
        }
        Ok(())
    }

    /// Inverse of [`apply`](Self::apply); degenerate bands map back to their
    /// constant value.
    pub fn invert(&self, data: &mut [f32], channels: usize) -> Result<()> {
        let plane = self.check(data, channels)?;
        for (b, chunk) in data.chunks_exact_mut(plane).enumerate() {
            let (lo, span) = (self.band_min[b], self.band_max[b] - self.band_min[b]);
            for v in chunk {
                *v = *v * span + lo;
            }
        }
        Ok(())
    }

    pub fn scale_frp(&self, mw: f32) -> f32 {
        if self.frp_degenerate {
            0.0
        } else {
            (mw - self.frp_min) / (self.frp_max - self.frp_min)
        }
    }

    pub fn unscale_frp(&self, scaled: f32) -> f32 {
        scaled * (self.frp_max - self.frp_min) + self.frp_min
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scaler serializes")
    }

    /// SHA-256 of the canonical JSON encoding, hex.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("scaler serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
