use serde::{Deserialize, Serialize};

use super::scene::Scene;
use super::{max_severity, FireClass};
use crate::error::{Error, Result};

pub const PATCH_H: usize = 24;
pub const PATCH_W: usize = 64;
pub const PATCH_PIXELS: usize = PATCH_H * PATCH_W;

/// A 24×64 window of a scene.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    /// Top-left pixel in the parent scene.
    pub row: usize,
    pub col: usize,
    /// Band-major `[C][24][64]`.
    pub data: Vec<f32>,
    pub mask: Option<Vec<u8>>,
    /// FRP in MW.
    pub frp: Option<Vec<f32>>,
}

impl Patch {
    pub fn channels(&self) -> usize {
        self.data.len() / PATCH_PIXELS
    }

    /// Maximum severity present in the mask, if the patch is labeled.
    pub fn label(&self) -> Option<FireClass> {
        self.mask.as_deref().map(max_severity)
    }
}

/// How a scene was cut into patches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tiling {
    pub scene_height: usize,
    pub scene_width: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Tiling {
    pub fn for_scene(height: usize, width: usize) -> Result<Self> {
        if height < PATCH_H || width < PATCH_W {
            return Err(Error::data(format!(
                "scene {height}×{width} is smaller than one {PATCH_H}×{PATCH_W} patch"
            )));
        }
        Ok(Self {
            scene_height: height,
            scene_width: width,
            rows: height / PATCH_H,
            cols: width / PATCH_W,
        })
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cropped_height(&self) -> usize {
        self.rows * PATCH_H
    }

    pub fn cropped_width(&self) -> usize {
        self.cols * PATCH_W
    }

    /// Rows and columns dropped from the bottom and right edges.
    pub fn crop(&self) -> (usize, usize) {
        (
            self.scene_height - self.cropped_height(),
            self.scene_width - self.cropped_width(),
        )
    }

    /// Origins in row-major order.
    pub fn origins(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.rows).flat_map(move |r| (0..self.cols).map(move |c| (r * PATCH_H, c * PATCH_W)))
    }
}

fn cut<T: Copy>(plane: &[T], width: usize, row: usize, col: usize, out: &mut Vec<T>) {
    for r in row..row + PATCH_H {
        out.extend_from_slice(&plane[r * width + col..r * width + col + PATCH_W]);
    }
}

/// Non-overlapping row-major tiling of the largest top-left sub-scene whose
/// size is a multiple of 24×64.
pub fn patchify(scene: &Scene) -> Result<(Vec<Patch>, Tiling)> {
    let tiling = Tiling::for_scene(scene.height, scene.width)?;
    let w = scene.width;
    let patches = tiling
        .origins()
        .map(|(row, col)| {
            let mut data = Vec::with_capacity(scene.channels() * PATCH_PIXELS);
            for c in 0..scene.channels() {
                cut(scene.band(c), w, row, col, &mut data);
            }
            let mask = scene.class_mask.as_ref().map(|m| {
                let mut v = Vec::with_capacity(PATCH_PIXELS);
                cut(m, w, row, col, &mut v);
                v
            });
            let frp = scene.frp.as_ref().map(|f| {
                let mut v = Vec::with_capacity(PATCH_PIXELS);
                cut(f, w, row, col, &mut v);
                v
            });
            Patch { row, col, data, mask, frp }
        })
        .collect();
    Ok((patches, tiling))
}

/// Places per-patch `[channels][24][64]` tiles (in tiling order) into
/// `[channels][cropped_h][cropped_w]` planes.
pub fn stitch_planes<T: Copy + Default>(tiles: &[&[T]], channels: usize, tiling: &Tiling) -> Result<Vec<T>> {
    if tiles.len() != tiling.len() {
        return Err(Error::dim(format!(
            "{} tiles for a {}×{} tiling",
            tiles.len(),
            tiling.rows,
            tiling.cols
        )));
    }
    let (h, w) = (tiling.cropped_height(), tiling.cropped_width());
    let mut out = vec![T::default(); channels * h * w];
    for (tile, (row, col)) in tiles.iter().zip(tiling.origins()) {
        if tile.len() != channels * PATCH_PIXELS {
            return Err(Error::dim(format!(
                "tile of {} values, expected {}",
                tile.len(),
                channels * PATCH_PIXELS
            )));
        }
        for c in 0..channels {
            for r in 0..PATCH_H {
                let src = &tile[c * PATCH_PIXELS + r * PATCH_W..][..PATCH_W];
                out[c * h * w + (row + r) * w + col..][..PATCH_W].copy_from_slice(src);
            }
        }
    }
    Ok(out)
}

/// Reassembles the cropped region of a scene from its patches.
pub fn stitch(patches: &[Patch], tiling: &Tiling, wavelengths: &[f32]) -> Result<Scene> {
    let c = wavelengths.len();
    let data: Vec<&[f32]> = patches.iter().map(|p| p.data.as_slice()).collect();
    let bands = stitch_planes(&data, c, tiling)?;
    let mut scene = Scene::new(tiling.cropped_height(), tiling.cropped_width(), wavelengths.to_vec(), bands)?;
    if patches.iter().all(|p| p.mask.is_some()) {
        let masks: Vec<&[u8]> = patches.iter().map(|p| p.mask.as_deref().unwrap()).collect();
        scene.class_mask = Some(stitch_planes(&masks, 1, tiling)?);
    }
    if patches.iter().all(|p| p.frp.is_some()) {
        let frp: Vec<&[f32]> = patches.iter().map(|p| p.frp.as_deref().unwrap()).collect();
        scene.frp = Some(stitch_planes(&frp, 1, tiling)?);
    }
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene(h: usize, w: usize) -> Scene {
        let c = 2;
        let mut s = Scene::new(h, w, vec![3.755, 11.33], (0..c * h * w).map(|i| i as f32).collect()).unwrap();
        s.class_mask = Some((0..h * w).map(|i| (i % 4) as u8).collect());
        s
    }

    #[test]
    fn four_patches_in_row_major_order() {
        let (p, t) = patchify(&scene(48, 128)).unwrap();
        let origins: Vec<_> = p.iter().map(|p| (p.row, p.col)).collect();
        assert_eq!(origins, [(0, 0), (0, 64), (24, 0), (24, 64)]);
        assert_eq!(t.crop(), (0, 0));
    }

    #[test]
    fn remainder_is_cropped_and_reported() {
        let (p, t) = patchify(&scene(50, 130)).unwrap();
        assert_eq!(p.len(), 4);
        assert_eq!(t.crop(), (2, 2));
    }

    #[test]
    fn too_small_scene_is_data_error() {
        assert!(matches!(patchify(&scene(23, 64)), Err(Error::Data(_))));
    }

    #[test]
    fn stitch_inverts_patchify_on_cropped_region() {
        let s = scene(50, 130);
        let (p, t) = patchify(&s).unwrap();
        let back = stitch(&p, &t, &s.wavelengths).unwrap();
        for c in 0..2 {
            for r in 0..48 {
                assert_eq!(&back.band(c)[r * 128..][..128], &s.band(c)[r * 130..][..128]);
            }
        }
    }
}
