//! Synthetic thermal scenes for training and benchmarking.

mod corpus;
mod generator;
mod noise;
pub mod planck;

pub use corpus::{generate_corpus_scene, scene_config, write_corpus, CorpusManifest, ManifestScene, MANIFEST_FILE};
pub use generator::{
    generate_scene, FireKind, FireSpec, GeneratedScene, SceneConfig, DECOY_DISTANCE_M, DECOY_FRACTION,
    DEFAULT_WAVELENGTHS, POINT_JITTER_M,
};
pub use noise::value_noise;
pub use planck::{brightness_temperature, planck_radiance};
