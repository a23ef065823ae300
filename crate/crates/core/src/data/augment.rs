use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::patch::{Patch, PATCH_H, PATCH_PIXELS, PATCH_W};
use super::split::{Partition, Split};
use crate::error::{Error, Result};

/// Default noise standard deviation in scaled band units.
pub const AUGMENT_NOISE_SIGMA: f32 = 0.01;

fn flip<T: Copy>(plane: &mut [T], horizontal: bool) {
    if horizontal {
        for row in plane.chunks_exact_mut(PATCH_W) {
            row.reverse();
        }
    } else {
        for r in 0..PATCH_H / 2 {
            let (top, bottom) = plane.split_at_mut((PATCH_H - 1 - r) * PATCH_W);
            top[r * PATCH_W..(r + 1) * PATCH_W].swap_with_slice(&mut bottom[..PATCH_W]);
        }
    }
}

/// Returns the training patches followed by one augmented copy of every
/// patch labeled with fire, in input order.
///
/// A copy is flipped horizontally or vertically (chosen uniformly; the same
/// flip is applied to bands, mask and FRP) and receives Gaussian noise of
/// standard deviation `sigma` on its band values. Must run after scaling.
pub fn augment(train: &Partition<'_>, sigma: f32, seed: u64) -> Result<Vec<Patch>> {
    if train.split() != Split::Train {
        return Err(Error::Usage(format!(
            "augmentation applies to the train split only, got {}",
            train.split()
        )));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::config(format!("noise sigma must be non-negative, got {sigma}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0f32, sigma).expect("validated sigma");
    let mut out: Vec<Patch> = train.patches().iter().map(|&p| p.clone()).collect();
    for &p in train.patches() {
        let label = p
            .label()
            .ok_or_else(|| Error::data(format!("patch at ({}, {}) has no class mask", p.row, p.col)))?;
        if !label.is_fire() {
            continue;
        }
        let horizontal = rng.random_bool(0.5);
        let mut copy = p.clone();
        for band in copy.data.chunks_exact_mut(PATCH_PIXELS) {
            flip(band, horizontal);
        }
        if let Some(m) = copy.mask.as_mut() {
            flip(m, horizontal);
        }
        if let Some(f) = copy.frp.as_mut() {
            flip(f, horizontal);
        }
        for v in &mut copy.data {
            *v += noise.sample(&mut rng);
        }
        out.push(copy);
    }
    Ok(out)
}
