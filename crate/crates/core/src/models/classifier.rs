//! Stage-one patch classifiers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::layers::{BatchNorm, Conv, Cx, Linear, Mode, ResidualBlock};
use super::params::ParamStore;
use crate::data::FireClass;
use crate::error::{Error, Result};
use crate::numerics::loss::softmax;
use crate::numerics::{Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierArch {
    SimpleCnn,
    ResnetLite,
}

impl FromStr for ClassifierArch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simple_cnn" | "simple-cnn" => Ok(Self::SimpleCnn),
            "resnet_lite" | "resnet-lite" => Ok(Self::ResnetLite),
            other => Err(Error::config(format!(
                "unsupported classifier architecture {other:?} (expected simple_cnn or resnet_lite)"
            ))),
        }
    }
}

impl fmt::Display for ClassifierArch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::SimpleCnn => "simple_cnn",
            Self::ResnetLite => "resnet_lite",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub arch: ClassifierArch,
    pub in_channels: usize,
    pub num_classes: usize,
}

impl ClassifierSpec {
    pub fn new(arch: ClassifierArch, in_channels: usize) -> Self {
        Self {
            arch,
            in_channels,
            num_classes: FireClass::COUNT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 {
            return Err(Error::config("classifier needs at least one input channel"));
        }
        if self.num_classes != FireClass::COUNT {
            return Err(Error::config(format!(
                "classifier must have {} classes, got {}",
                FireClass::COUNT,
                self.num_classes
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
enum Body {
    /// 3 × (conv3×3 → BN → ReLU → maxpool2), GAP, linear 128 → ReLU → linear.
    Simple {
        blocks: Vec<(Conv, BatchNorm)>,
        hidden: Linear,
        out: Linear,
    },
    /// 3×3 stem, four stages of two basic blocks, GAP, linear.
    Resnet {
        stem: (Conv, BatchNorm),
        blocks: Vec<ResidualBlock>,
        out: Linear,
    },
}

/// Maps `[N, C, 24, 64]` patches to logits `[N, 4]`.
///
/// Both architectures are fully convolutional up to a global average pool,
/// so any spatial size at least 8×8 is accepted. No padding beyond the
/// same-size 3×3 convolutions is applied.
#[derive(Clone, Debug)]
pub struct Classifier {
    spec: ClassifierSpec,
    store: ParamStore,
    body: Body,
}

const SIMPLE_WIDTHS: [usize; 3] = [32, 64, 128];
const SIMPLE_HIDDEN: usize = 128;
const RESNET_WIDTHS: [usize; 4] = [32, 64, 128, 256];

pub fn build_classifier(spec: ClassifierSpec, seed: u64) -> Result<Classifier> {
    spec.validate()?;
    let mut store = ParamStore::new(seed);
    let s = &mut store;
    let k = spec.num_classes;
    let body = match spec.arch {
        ClassifierArch::SimpleCnn => {
            let mut cin = spec.in_channels;
            let mut blocks = Vec::new();
            for (i, &w) in SIMPLE_WIDTHS.iter().enumerate() {
                let conv = Conv::new(s, &format!("block{i}.conv"), cin, w, 3, 1, false);
                let bn = BatchNorm::new(s, &format!("block{i}.bn"), w);
                blocks.push((conv, bn));
                cin = w;
            }
            let hidden = Linear::new(s, "fc1", cin, SIMPLE_HIDDEN);
            let out = Linear::new(s, "fc2", SIMPLE_HIDDEN, k);
            Body::Simple { blocks, hidden, out }
        }
        ClassifierArch::ResnetLite => {
            let w0 = RESNET_WIDTHS[0];
            let stem = (
                Conv::new(s, "stem.conv", spec.in_channels, w0, 3, 1, false),
                BatchNorm::new(s, "stem.bn", w0),
            );
            let mut blocks = Vec::new();
            let mut cin = w0;
            for (stage, &w) in RESNET_WIDTHS.iter().enumerate() {
                for b in 0..2 {
                    let stride = if stage > 0 && b == 0 { 2 } else { 1 };
                    blocks.push(ResidualBlock::new(s, &format!("stage{stage}.block{b}"), cin, w, stride));
                    cin = w;
                }
            }
            let out = Linear::new(s, "fc", cin, k);
            Body::Resnet { stem, blocks, out }
        }
    };
    Ok(Classifier { spec, store, body })
}

impl Classifier {
    pub fn spec(&self) -> &ClassifierSpec {
        &self.spec
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn num_parameters(&self) -> usize {
        self.store.num_parameters()
    }

    pub fn forward(&self, cx: &Cx, x: &Var<f32>) -> Result<Var<f32>> {
        let c = x.shape().get(1).copied().unwrap_or(0);
        if x.shape().len() != 4 || c != self.spec.in_channels {
            return Err(Error::dim(format!(
                "classifier expects [N, {}, H, W], got {:?}",
                self.spec.in_channels,
                x.shape()
            )));
        }
        match &self.body {
            Body::Simple { blocks, hidden, out } => {
                let mut h = x.clone();
                for (conv, bn) in blocks {
                    h = bn.forward(cx, &conv.forward(cx, &h)?)?.relu().maxpool2d(2, 2)?;
                }
                let h = hidden.forward(cx, &h.global_avg_pool()?)?.relu();
                out.forward(cx, &h)
            }
            Body::Resnet { stem, blocks, out } => {
                let mut h = stem.1.forward(cx, &stem.0.forward(cx, x)?)?.relu();
                for b in blocks {
                    h = b.forward(cx, &h)?;
                }
                out.forward(cx, &h.global_avg_pool()?)
            }
        }
    }

    /// Eval-mode logits `[N, 4]`.
    pub fn logits(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        let cx = Cx::new(&self.store, Mode::Eval);
        Ok(self.forward(&cx, &Var::constant(x.clone()))?.value().clone())
    }

    /// Eval-mode class probabilities `[N, 4]`.
    pub fn probabilities(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        softmax(&self.logits(x)?)
    }
}
