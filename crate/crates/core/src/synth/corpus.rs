//! Writing generated scenes to disk.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::generator::{generate_scene, GeneratedScene, SceneConfig};
use crate::data::{max_severity, patchify, save_scene, write_points_csv};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestScene {
    pub id: usize,
    pub file: String,
    pub points_file: String,
    pub seed: u64,
    pub fire_pixels: usize,
    pub patches: usize,
    pub fire_patches: usize,
    pub decoy_points: usize,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub seed: u64,
    pub config: SceneConfig,
    pub scenes: Vec<ManifestScene>,
}

impl CorpusManifest {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(dir.as_ref().join(MANIFEST_FILE))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Configuration of scene `index` in a corpus seeded with `cfg.seed`: its
/// own seed and a center shifted north by 0.05° per scene.
pub fn scene_config(cfg: &SceneConfig, index: usize) -> SceneConfig {
    let mut c = cfg.clone();
    c.seed = cfg
        .seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index as u64 + 1);
    c.center_lat = cfg.center_lat + 0.05 * index as f64;
    c
}

/// Generates scene `index` of the corpus in memory.
pub fn generate_corpus_scene(cfg: &SceneConfig, index: usize) -> Result<GeneratedScene> {
    generate_scene(&scene_config(cfg, index))
}

/// Writes `n` scenes (`scene_NNNN.msf` + `scene_NNNN.points.csv`) and
/// `manifest.json` into `dir`.
pub fn write_corpus(cfg: &SceneConfig, n: usize, dir: impl AsRef<Path>) -> Result<CorpusManifest> {
    if n == 0 {
        return Err(Error::Usage("scene count must be at least 1".into()));
    }
    cfg.validate()?;
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut scenes = Vec::with_capacity(n);
    for i in 0..n {
        let sc = scene_config(cfg, i);
        let g = generate_scene(&sc)?;
        let file = format!("scene_{i:04}.msf");
        let points_file = format!("scene_{i:04}.points.csv");
        save_scene(&g.scene, dir.join(&file))?;
        write_points_csv(&g.points, BufWriter::new(File::create(dir.join(&points_file))?))?;
        let (patches, _) = patchify(&g.scene)?;
        let fire_patches = patches
            .iter()
            .filter(|p| p.mask.as_deref().is_some_and(|m| max_severity(m).is_fire()))
            .count();
        let mask = g.scene.class_mask.as_deref().unwrap_or(&[]);
        scenes.push(ManifestScene {
            id: i,
            file,
            points_file,
            seed: sc.seed,
            fire_pixels: mask.iter().filter(|&&c| c != 0).count(),
            patches: patches.len(),
            fire_patches,
            decoy_points: g.decoys,
            warnings: g.warnings,
        });
    }
    let manifest = CorpusManifest {
        seed: cfg.seed,
        config: cfg.clone(),
        scenes,
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}
