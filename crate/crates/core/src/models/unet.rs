//! Residual U-Net for per-pixel segmentation or FRP regression.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::layers::{Conv, Cx, Mode, ResidualBlock, UpConv};
use super::params::ParamStore;
use crate::data::FireClass;
use crate::error::{Error, Result};
use crate::numerics::{Tensor, Var};

pub const MAX_DEPTH: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UNetHead {
    /// Four-class logits per pixel.
    Segmentation,
    /// One FRP value per pixel.
    Frp,
}

impl UNetHead {
    pub fn out_channels(self) -> usize {
        match self {
            Self::Segmentation => FireClass::COUNT,
            Self::Frp => 1,
        }
    }
}

impl FromStr for UNetHead {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seg" | "segmentation" => Ok(Self::Segmentation),
            "frp" => Ok(Self::Frp),
            other => Err(Error::config(format!("unknown task {other:?} (expected seg or frp)"))),
        }
    }
}

impl fmt::Display for UNetHead {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Segmentation => "seg",
            Self::Frp => "frp",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UNetSpec {
    pub in_channels: usize,
    pub head: UNetHead,
    pub depth: usize,
    pub base_width: usize,
    pub deep_supervision: bool,
}

impl UNetSpec {
    pub fn new(in_channels: usize, head: UNetHead) -> Self {
        Self {
            in_channels,
            head,
            depth: 3,
            base_width: 32,
            deep_supervision: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.base_width == 0 {
            return Err(Error::config("U-Net needs positive input channels and base width"));
        }
        if !(1..=MAX_DEPTH).contains(&self.depth) {
            return Err(Error::config(format!(
                "U-Net depth must be in 1..={MAX_DEPTH}, got {}",
                self.depth
            )));
        }
        Ok(())
    }

    /// Decoder levels carrying an auxiliary head, finest first (level `l`
    /// has scale `1/2^l`). Levels 1 and 2 at most.
    pub fn aux_levels(&self) -> Vec<usize> {
        if !self.deep_supervision {
            return Vec::new();
        }
        (1..self.depth.min(MAX_DEPTH)).collect()
    }
}

/// Deep-supervision weight of the auxiliary output at level `l`: `0.5^l`.
pub fn aux_weight(level: usize) -> f64 {
    0.5f64.powi(level as i32)
}

/// Forward result: full-resolution output plus auxiliary outputs as
/// `(level, tensor)`, finest first.
pub struct UNetOutput {
    pub main: Var<f32>,
    pub aux: Vec<(usize, Var<f32>)>,
}

#[derive(Clone, Debug)]
pub struct UNet {
    spec: UNetSpec,
    store: ParamStore,
    /// `depth + 1` encoder blocks; the last is the bottleneck.
    enc: Vec<ResidualBlock>,
    /// Indexed by target level: `ups[l]` maps level `l+1` to level `l`.
    ups: Vec<UpConv>,
    dec: Vec<ResidualBlock>,
    head: Conv,
    aux: Vec<(usize, Conv)>,
}

pub fn build_unet(spec: UNetSpec, seed: u64) -> Result<UNet> {
    spec.validate()?;
    let mut store = ParamStore::new(seed);
    let s = &mut store;
    let width = |l: usize| spec.base_width << l;
    let out_c = spec.head.out_channels();

    let mut enc = vec![ResidualBlock::new(s, "enc0", spec.in_channels, width(0), 1)];
    for l in 1..=spec.depth {
        enc.push(ResidualBlock::new(s, &format!("enc{l}"), width(l - 1), width(l), 1));
    }
    let mut ups = Vec::new();
    let mut dec = Vec::new();
    for l in 0..spec.depth {
        ups.push(UpConv::new(s, &format!("up{l}"), width(l + 1), width(l)));
        dec.push(ResidualBlock::new(s, &format!("dec{l}"), 2 * width(l), width(l), 1));
    }
    let head = Conv::new(s, "head", width(0), out_c, 1, 1, true);
    let aux = spec
        .aux_levels()
        .into_iter()
        .map(|l| (l, Conv::new(s, &format!("aux{l}"), width(l), out_c, 1, 1, true)))
        .collect();
    Ok(UNet { spec, store, enc, ups, dec, head, aux })
}

impl UNet {
    pub fn spec(&self) -> &UNetSpec {
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

    /// Input height and width must be divisible by `2^depth` so every
    /// pooling level halves exactly and the decoder restores the input size.
    pub fn check_input(&self, shape: &[usize]) -> Result<()> {
        let f = 1usize << self.spec.depth;
        if shape.len() != 4 || shape[1] != self.spec.in_channels {
            return Err(Error::dim(format!(
                "U-Net expects [N, {}, H, W], got {shape:?}",
                self.spec.in_channels
            )));
        }
        if !shape[2].is_multiple_of(f) || !shape[3].is_multiple_of(f) || shape[2] == 0 || shape[3] == 0 {
            return Err(Error::config(format!(
                "spatial dims {}×{} not divisible by 2^{} = {f}",
                shape[2], shape[3], self.spec.depth
            )));
        }
        Ok(())
    }

    pub fn forward(&self, cx: &Cx, x: &Var<f32>) -> Result<UNetOutput> {
        self.check_input(x.shape())?;
        let depth = self.spec.depth;
        let mut skips = Vec::with_capacity(depth);
        let mut h = self.enc[0].forward(cx, x)?;
        for l in 1..=depth {
            skips.push(h.clone());
            h = self.enc[l].forward(cx, &h.maxpool2d(2, 2)?)?;
        }
        let mut aux = Vec::new();
        for l in (0..depth).rev() {
            let up = self.ups[l].forward(cx, &h)?;
            h = self.dec[l].forward(cx, &Var::concat_channels(&[up, skips[l].clone()])?)?;
            if let Some((_, conv)) = self.aux.iter().find(|(al, _)| *al == l) {
                aux.push((l, conv.forward(cx, &h)?));
            }
        }
        aux.reverse();
        let main = self.head.forward(cx, &h)?;
        Ok(UNetOutput { main, aux })
    }

    /// Eval-mode full-resolution output: logits `[N, 4, H, W]` for
    /// segmentation, FRP `[N, 1, H, W]` clamped at zero for regression.
    pub fn infer(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        let cx = Cx::new(&self.store, Mode::Eval);
        let out = self.forward(&cx, &Var::constant(x.clone()))?.main.value().clone();
        Ok(match self.spec.head {
            UNetHead::Segmentation => out,
            UNetHead::Frp => out.map(|v| v.max(0.0)),
        })
    }
}
