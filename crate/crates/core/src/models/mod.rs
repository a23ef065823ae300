//! Stage-one classifiers, the stage-two residual U-Net, training and
//! checkpoints.

pub mod checkpoint;
pub mod classifier;
pub mod layers;
pub mod params;
pub mod train;
pub mod unet;

pub use checkpoint::{Checkpoint, Model, ModelSpec, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use classifier::{build_classifier, Classifier, ClassifierArch, ClassifierSpec};
pub use layers::{Cx, Mode};
pub use params::ParamStore;
pub use train::{argmax_classes, train_classifier, train_unet, EpochRecord, TrainConfig, Trained};
pub use unet::{aux_weight, build_unet, UNet, UNetHead, UNetOutput, UNetSpec, MAX_DEPTH};
