//! Training tensors and the on-disk patch store.

use std::fs;
use std::path::Path;

use super::msf::Reader;
use super::patch::{Patch, PATCH_H, PATCH_PIXELS, PATCH_W};
use super::scaler::ScalerParams;
use super::split::Split;
use super::{max_severity, FireClass};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Dense, labeled patches ready for batching: scaled bands, pixel classes,
/// MinMax-scaled FRP and the patch-level label.
#[derive(Clone, Debug, Default)]
pub struct PatchSet {
    pub channels: usize,
    /// `[N][C][24][64]`.
    pub x: Vec<f32>,
    /// `[N][24][64]` class codes.
    pub mask: Vec<u8>,
    /// `[N][24][64]` scaled FRP.
    pub frp: Vec<f32>,
    pub labels: Vec<FireClass>,
}

impl PatchSet {
    /// Builds from already band-scaled patches; FRP is scaled here.
    /// Every patch must carry a class mask and an FRP plane.
    pub fn from_patches<'a>(patches: impl IntoIterator<Item = &'a Patch>, scaler: &ScalerParams) -> Result<Self> {
        let mut set = PatchSet {
            channels: scaler.channels(),
            ..Default::default()
        };
        for p in patches {
            if p.channels() != set.channels {
                return Err(Error::dim(format!(
                    "patch has {} bands, scaler {}",
                    p.channels(),
                    set.channels
                )));
            }
            let (Some(mask), Some(frp)) = (&p.mask, &p.frp) else {
                return Err(Error::data(format!(
                    "patch at ({}, {}) lacks a class mask or FRP plane",
                    p.row, p.col
                )));
            };
            set.x.extend_from_slice(&p.data);
            set.mask.extend_from_slice(mask);
            set.frp.extend(frp.iter().map(|&v| scaler.scale_frp(v)));
            set.labels.push(max_severity(mask));
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Input tensor `[n, C, 24, 64]` for the listed samples.
    pub fn inputs(&self, idx: &[usize]) -> Tensor<f32> {
        let per = self.channels * PATCH_PIXELS;
        let mut data = Vec::with_capacity(idx.len() * per);
        for &i in idx {
            data.extend_from_slice(&self.x[i * per..(i + 1) * per]);
        }
        Tensor::new(vec![idx.len(), self.channels, PATCH_H, PATCH_W], data).expect("consistent sizes")
    }

    pub fn masks(&self, idx: &[usize]) -> Vec<u8> {
        idx.iter()
            .flat_map(|&i| &self.mask[i * PATCH_PIXELS..(i + 1) * PATCH_PIXELS])
            .copied()
            .collect()
    }

    pub fn frp_targets(&self, idx: &[usize]) -> Vec<f32> {
        idx.iter()
            .flat_map(|&i| &self.frp[i * PATCH_PIXELS..(i + 1) * PATCH_PIXELS])
            .copied()
            .collect()
    }

    pub fn label_codes(&self, idx: &[usize]) -> Vec<usize> {
        idx.iter().map(|&i| self.labels[i] as usize).collect()
    }
}

/// One entry of the patch store.
#[derive(Clone, Debug, PartialEq)]
pub struct StoredPatch {
    pub scene_id: usize,
    pub split: Split,
    /// True for copies produced by augmentation.
    pub augmented: bool,
    pub patch: Patch,
}

const STORE_MAGIC: &[u8; 4] = b"PFPS";
const STORE_VERSION: u32 = 1;

fn split_code(s: Split) -> u8 {
    match s {
        Split::Train => 0,
        Split::Val => 1,
        Split::Test => 2,
    }
}

/// Binary patch store: `"PFPS"`, version, count, channels, then per patch
/// `scene_id, row, col` (u32), `split, augmented, has_mask, has_frp` (u8),
/// band data (f32), mask (u8), FRP (f32). Little-endian throughout.
pub fn write_patch_store(path: impl AsRef<Path>, channels: usize, patches: &[StoredPatch]) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(STORE_MAGIC);
    for v in [STORE_VERSION, patches.len() as u32, channels as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for sp in patches {
        let p = &sp.patch;
        if p.data.len() != channels * PATCH_PIXELS {
            return Err(Error::dim("patch band count differs from store"));
        }
        for v in [sp.scene_id, p.row, p.col] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&[
            split_code(sp.split),
            sp.augmented as u8,
            p.mask.is_some() as u8,
            p.frp.is_some() as u8,
        ]);
        for v in &p.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        if let Some(m) = &p.mask {
            out.extend_from_slice(m);
        }
        if let Some(f) = &p.frp {
            for v in f {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_patch_store(path: impl AsRef<Path>) -> Result<(usize, Vec<StoredPatch>)> {
    let buf = fs::read(path)?;
    let mut r = Reader { buf: &buf, pos: 0 };
    if r.take(4, "magic")? != STORE_MAGIC {
        return Err(Error::format(0, "bad magic, expected \"PFPS\""));
    }
    let version = r.u32("version")?;
    if version != STORE_VERSION {
        return Err(Error::format(4, format!("unsupported patch store version {version}")));
    }
    let count = r.u32("patch count")? as usize;
    let channels = r.u32("channel count")? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let scene_id = r.u32("scene id")? as usize;
        let row = r.u32("row")? as usize;
        let col = r.u32("col")? as usize;
        let flags_at = r.pos as u64;
        let flags = r.take(4, "flags")?;
        let split = match flags[0] {
            0 => Split::Train,
            1 => Split::Val,
            2 => Split::Test,
            other => return Err(Error::format(flags_at, format!("bad split code {other}"))),
        };
        let (augmented, has_mask, has_frp) = (flags[1] != 0, flags[2] != 0, flags[3] != 0);
        let data = r.f32s(channels * PATCH_PIXELS, "band data")?;
        let mask = if has_mask { Some(r.take(PATCH_PIXELS, "mask")?.to_vec()) } else { None };
        let frp = if has_frp { Some(r.f32s(PATCH_PIXELS, "FRP")?) } else { None };
        out.push(StoredPatch {
            scene_id,
            split,
            augmented,
            patch: Patch { row, col, data, mask, frp },
        });
    }
    if r.pos != buf.len() {
        return Err(Error::format(r.pos as u64, "trailing bytes in patch store"));
    }
    Ok((channels, out))
}
