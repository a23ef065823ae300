//! Two-stage wildfire analysis: a lightweight patch classifier decides which
//! 24×64 multispectral patches contain fire, and only those are passed to a
//! residual U-Net for per-pixel segmentation or fire radiative power (FRP)
//! regression.
//!
//! Modules, bottom up:
//!
//! - [`numerics`]: tensors, kernels, reverse-mode differentiation, Adam.
//! - [`models`]: classifier and residual U-Net builders, losses, training, checkpoints.
//! - [`data`]: scene files, patch tiling, labels, scaling, augmentation, splits, FRP join.
//! - [`synth`]: Planck radiance and the synthetic scene generator.
//! - [`pipeline`]: single-stage and cascade inference, latency benchmark, metrics.

pub mod data;
pub mod error;
pub mod models;
pub mod numerics;
pub mod par;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
