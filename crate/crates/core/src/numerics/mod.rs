//! Tensor arithmetic and reverse-mode differentiation.
//!
//! Just enough machinery to train and run the classifier and U-Net
//! architectures on CPU: dense tensors, convolution/pooling/normalization
//! kernels, losses, a graph-recording [`Var`] and the Adam optimizer.
//! Every kernel is generic over [`Scalar`] so the same code runs in `f32`
//! for training and `f64` for finite-difference checks.

pub mod act;
pub mod adam;
pub mod autodiff;
pub mod conv;
pub mod loss;
pub mod norm;
pub mod pool;
pub mod tensor;

pub use act::Activation;
pub use adam::{AdamConfig, AdamState};
pub use autodiff::{Gradients, Var};
pub use loss::FrpLossConfig;
pub use norm::BatchStats;
pub use tensor::{Scalar, Tensor};
