//! Scenes, patches and everything between a raster on disk and a training
//! batch: the MSF file format, tiling, labels, scaling, augmentation,
//! dataset splits and the FRP point join.

mod augment;
mod dataset;
mod join;
mod labels;
pub(crate) mod msf;
mod patch;
mod scaler;
mod scene;
mod split;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use augment::{augment, AUGMENT_NOISE_SIGMA};
pub use dataset::{read_patch_store, write_patch_store, PatchSet, StoredPatch};
pub use join::{join_frp, read_points_csv, write_points_csv, FrpPoint, LocalProjection, EARTH_RADIUS_M, JOIN_THRESHOLD_M};
pub use labels::{derive_class_mask, ClassThresholds, MWIR_WAVELENGTH_UM};
pub use msf::{decode_scene, encode_scene, load_scene, save_scene, MSF_MAGIC};
pub use patch::{patchify, stitch, stitch_planes, Patch, Tiling, PATCH_H, PATCH_PIXELS, PATCH_W};
pub use scaler::{fit_minmax, ScalerParams};
pub use scene::{Geolocation, Scene};
pub use split::{split_dataset, Partition, Split, SplitEntry, SplitManifest};

/// Per-pixel fire taxonomy, ordered by severity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum FireClass {
    #[default]
    NoFire = 0,
    Smoldering = 1,
    Flaming = 2,
    /// Radiance clipped at the sensor maximum.
    Saturated = 3,
}

impl FireClass {
    pub const COUNT: usize = 4;
    pub const ALL: [FireClass; 4] = [Self::NoFire, Self::Smoldering, Self::Flaming, Self::Saturated];

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn is_fire(self) -> bool {
        self != Self::NoFire
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::NoFire => "no_fire",
            Self::Smoldering => "smoldering",
            Self::Flaming => "flaming",
            Self::Saturated => "saturated",
        }
    }
}

impl fmt::Display for FireClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Highest severity code in a mask (NoFire for an empty mask).
pub fn max_severity(mask: &[u8]) -> FireClass {
    mask.iter()
        .copied()
        .max()
        .and_then(FireClass::from_code)
        .unwrap_or(FireClass::NoFire)
}
