//! From labeled scenes to scaled, split, optionally augmented patches.

use crate::data::{
    augment, derive_class_mask, fit_minmax, join_frp, patchify, split_dataset, ClassThresholds, FrpPoint, Patch,
    PatchSet, ScalerParams, Scene, Split, SplitManifest, StoredPatch, AUGMENT_NOISE_SIGMA, JOIN_THRESHOLD_M,
};
use crate::error::{Error, Result};

/// A scene with its optional FRP point list.
#[derive(Clone, Debug)]
pub struct SourceScene {
    pub id: usize,
    pub scene: Scene,
    pub points: Option<Vec<FrpPoint>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrepareConfig {
    pub ratios: (f64, f64, f64),
    pub seed: u64,
    pub augment: bool,
    pub noise_sigma: f32,
    pub join_threshold_m: f64,
    pub thresholds: ClassThresholds,
    /// MWIR sensor maximum, needed only for scenes without a class mask.
    pub mwir_sensor_max: Option<f64>,
}

impl PrepareConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            ratios: (0.8, 0.1, 0.1),
            seed,
            augment: false,
            noise_sigma: AUGMENT_NOISE_SIGMA,
            join_threshold_m: JOIN_THRESHOLD_M,
            thresholds: ClassThresholds::default(),
            mwir_sensor_max: None,
        }
    }
}

/// Output of [`prepare`]. `patches` holds every original patch in manifest
/// order (band-scaled, raw FRP in MW), followed by augmented train copies.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub channels: usize,
    pub wavelengths: Vec<f32>,
    pub scaler: ScalerParams,
    pub manifest: SplitManifest,
    pub patches: Vec<StoredPatch>,
}

/// Fills in the class mask (derived if absent) and FRP plane (joined from
/// points when given, else the scene's own).
pub fn label_scene(src: &mut SourceScene, cfg: &PrepareConfig) -> Result<()> {
    let scene = &mut src.scene;
    if scene.class_mask.is_none() {
        let max = cfg.mwir_sensor_max.ok_or_else(|| {
            Error::data(format!(
                "scene {} has no class mask and no MWIR sensor maximum was given",
                src.id
            ))
        })?;
        scene.class_mask = Some(derive_class_mask(scene, &cfg.thresholds, max)?);
    }
    if let Some(points) = &src.points {
        scene.frp = Some(join_frp(points, scene, cfg.join_threshold_m)?);
    }
    if scene.frp.is_none() {
        return Err(Error::data(format!("scene {} has neither FRP points nor an FRP plane", src.id)));
    }
    Ok(())
}

pub fn prepare(mut scenes: Vec<SourceScene>, cfg: &PrepareConfig) -> Result<Prepared> {
    let first = scenes.first().ok_or_else(|| Error::data("no scenes to prepare"))?;
    let wavelengths = first.scene.wavelengths.clone();
    let mut raw: Vec<Patch> = Vec::new();
    let mut keys = Vec::new();
    for src in &mut scenes {
        if src.scene.wavelengths != wavelengths {
            return Err(Error::data(format!("scene {} has a different band set", src.id)));
        }
        label_scene(src, cfg)?;
        let (patches, _) = patchify(&src.scene)?;
        for p in patches {
            keys.push((src.id, p.row, p.col));
            raw.push(p);
        }
    }
    let manifest = split_dataset(&keys, cfg.ratios, cfg.seed)?;
    let scaler = fit_minmax(&manifest.partition(&raw, Split::Train)?)?;
    let channels = wavelengths.len();
    for p in &mut raw {
        scaler.apply(&mut p.data, channels)?;
    }
    let mut patches: Vec<StoredPatch> = raw
        .iter()
        .zip(&manifest.entries)
        .map(|(p, e)| StoredPatch {
            scene_id: e.scene_id,
            split: e.split,
            augmented: false,
            patch: p.clone(),
        })
        .collect();
    if cfg.augment {
        let train = manifest.partition(&raw, Split::Train)?;
        let scene_of: Vec<usize> = manifest.ids(Split::Train).iter().map(|&i| keys[i].0).collect();
        let out = augment(&train, cfg.noise_sigma, cfg.seed)?;
        // Copies follow the originals; map each back to its source's scene.
        let fire_sources = train
            .patches()
            .iter()
            .zip(&scene_of)
            .filter(|(p, _)| p.label().is_some_and(|l| l.is_fire()))
            .map(|(_, &s)| s);
        for (copy, scene_id) in out.into_iter().skip(train.len()).zip(fire_sources) {
            patches.push(StoredPatch {
                scene_id,
                split: Split::Train,
                augmented: true,
                patch: copy,
            });
        }
    }
    Ok(Prepared {
        channels,
        wavelengths,
        scaler,
        manifest,
        patches,
    })
}

/// Training tensors for one split. Augmented copies belong to train only.
pub fn patch_set(patches: &[StoredPatch], scaler: &ScalerParams, split: Split) -> Result<PatchSet> {
    PatchSet::from_patches(
        patches.iter().filter(|p| p.split == split).map(|p| &p.patch),
        scaler,
    )
}

/// Training tensors for one split restricted to fire-labeled patches.
pub fn fire_patch_set(patches: &[StoredPatch], scaler: &ScalerParams, split: Split) -> Result<PatchSet> {
    PatchSet::from_patches(
        patches
            .iter()
            .filter(|p| p.split == split && p.patch.label().is_some_and(|l| l.is_fire()))
            .map(|p| &p.patch),
        scaler,
    )
}
