//! Single-stage and two-stage (PyroFocus) inference.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{stitch_planes, FireClass, Patch, ScalerParams, Tiling, PATCH_H, PATCH_PIXELS, PATCH_W};
use crate::error::{Error, Result};
use crate::models::{argmax_classes, Classifier, UNet, UNetHead};
use crate::numerics::loss::softmax;
use crate::numerics::Tensor;
use crate::par::map_ordered;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Seg,
    Frp,
}

impl Task {
    pub fn head(self) -> UNetHead {
        match self {
            Self::Seg => UNetHead::Segmentation,
            Self::Frp => UNetHead::Frp,
        }
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seg" | "segmentation" => Ok(Self::Seg),
            "frp" => Ok(Self::Frp),
            other => Err(Error::config(format!("unknown task {other:?} (expected seg or frp)"))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Seg => "seg",
            Self::Frp => "frp",
        })
    }
}

/// When a patch is forwarded to the U-Net.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Routing {
    /// Route iff the classifier's argmax is a fire class.
    Argmax,
    /// Route iff `1 − P(NoFire) ≥ tau`.
    Threshold { tau: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeConfig {
    pub task: Task,
    pub routing: Routing,
    pub batch_size: usize,
    /// Patch-parallel workers; predictions do not depend on this.
    pub threads: usize,
}

impl CascadeConfig {
    pub fn new(task: Task) -> Self {
        Self {
            task,
            routing: Routing::Argmax,
            batch_size: 64,
            threads: 1,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.threads == 0 {
            return Err(Error::config("batch size and thread count must be positive"));
        }
        if let Routing::Threshold { tau } = self.routing {
            if !(0.0..=1.0).contains(&tau) {
                return Err(Error::config(format!("routing threshold {tau} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Unscaled patches `[N][C][24][64]` of one image, in tiling order.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchBatch {
    pub channels: usize,
    pub data: Vec<f32>,
}

impl PatchBatch {
    pub fn from_patches(patches: &[Patch]) -> Result<Self> {
        let channels = patches.first().map_or(0, Patch::channels);
        let mut data = Vec::with_capacity(patches.len() * channels * PATCH_PIXELS);
        for p in patches {
            if p.channels() != channels {
                return Err(Error::dim("patches with different band counts"));
            }
            data.extend_from_slice(&p.data);
        }
        Ok(Self { channels, data })
    }

    pub fn len(&self) -> usize {
        if self.channels == 0 {
            0
        } else {
            self.data.len() / (self.channels * PATCH_PIXELS)
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn tensor(&self, idx: &[usize]) -> Tensor<f32> {
        let per = self.channels * PATCH_PIXELS;
        let mut d = Vec::with_capacity(idx.len() * per);
        for &i in idx {
            d.extend_from_slice(&self.data[i * per..(i + 1) * per]);
        }
        Tensor::new(vec![idx.len(), self.channels, PATCH_H, PATCH_W], d).expect("consistent sizes")
    }
}

/// Per-patch output planes `[N][24][64]`.
#[derive(Clone, Debug, PartialEq)]
pub enum Planes {
    Seg(Vec<u8>),
    Frp(Vec<f32>),
}

impl Planes {
    fn empty(task: Task, n: usize) -> Self {
        match task {
            Task::Seg => Self::Seg(vec![FireClass::NoFire.code(); n * PATCH_PIXELS]),
            Task::Frp => Self::Frp(vec![0.0; n * PATCH_PIXELS]),
        }
    }

    pub fn patches(&self) -> usize {
        match self {
            Self::Seg(v) => v.len() / PATCH_PIXELS,
            Self::Frp(v) => v.len() / PATCH_PIXELS,
        }
    }

    /// Little-endian bytes, for hashing.
    pub fn bytes(&self) -> Vec<u8> {
        match self {
            Self::Seg(v) => v.clone(),
            Self::Frp(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        }
    }

    /// Places the patch planes at their tiling origins (no blending).
    pub fn stitch(&self, tiling: &Tiling) -> Result<Planes> {
        Ok(match self {
            Self::Seg(v) => Self::Seg(stitch_planes(&v.chunks(PATCH_PIXELS).collect::<Vec<_>>(), 1, tiling)?),
            Self::Frp(v) => Self::Frp(stitch_planes(&v.chunks(PATCH_PIXELS).collect::<Vec<_>>(), 1, tiling)?),
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RoutingStats {
    pub patches_total: usize,
    pub patches_routed: usize,
    /// Classifier decisions per class (all zero for the single-stage pipeline).
    pub predicted_per_class: [usize; 4],
    pub unet_invocations: usize,
}

impl RoutingStats {
    pub fn merge(&mut self, other: &RoutingStats) {
        self.patches_total += other.patches_total;
        self.patches_routed += other.patches_routed;
        self.unet_invocations += other.unet_invocations;
        for (a, b) in self.predicted_per_class.iter_mut().zip(other.predicted_per_class) {
            *a += b;
        }
    }
}

/// Wall-clock seconds per stage. Stage 1 is scaling plus classification
/// (scaling only for the single-stage pipeline); stage 2 is the U-Net.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub stage1_s: f64,
    pub stage2_s: f64,
    pub total_s: f64,
}

impl StageTimes {
    pub fn overhead_s(&self) -> f64 {
        self.total_s - self.stage1_s - self.stage2_s
    }

    pub fn add(&mut self, o: &StageTimes) {
        self.stage1_s += o.stage1_s;
        self.stage2_s += o.stage2_s;
        self.total_s += o.total_s;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub planes: Planes,
    pub routed: Vec<bool>,
    pub stats: RoutingStats,
    pub times: StageTimes,
}

/// Applies `scaler`, or passes already-scaled input through.
fn scaled<'a>(input: &'a PatchBatch, scaler: Option<&ScalerParams>) -> Result<std::borrow::Cow<'a, PatchBatch>> {
    match scaler {
        Some(s) => {
            let mut out = input.clone();
            s.apply(&mut out.data, input.channels)?;
            Ok(std::borrow::Cow::Owned(out))
        }
        None => Ok(std::borrow::Cow::Borrowed(input)),
    }
}

fn check_head(unet: &UNet, task: Task) -> Result<()> {
    if unet.spec().head != task.head() {
        return Err(Error::config(format!(
            "U-Net head is {} but the task is {task}",
            unet.spec().head
        )));
    }
    Ok(())
}

/// Runs the U-Net on the listed patches and writes results into `planes`.
fn run_unet(
    unet: &UNet,
    x: &PatchBatch,
    idx: &[usize],
    planes: &mut Planes,
    batch_size: usize,
    threads: usize,
) -> Result<()> {
    let chunks: Vec<&[usize]> = idx.chunks(batch_size).collect();
    let outs = map_ordered(&chunks, threads, |c| unet.infer(&x.tensor(c)));
    for (chunk, out) in chunks.iter().zip(outs) {
        let out = out?;
        match planes {
            Planes::Seg(v) => {
                for (k, cls) in argmax_classes(&out).chunks(PATCH_PIXELS).enumerate() {
                    v[chunk[k] * PATCH_PIXELS..][..PATCH_PIXELS].copy_from_slice(cls);
                }
            }
            Planes::Frp(v) => {
                for (k, f) in out.data().chunks(PATCH_PIXELS).enumerate() {
                    v[chunk[k] * PATCH_PIXELS..][..PATCH_PIXELS].copy_from_slice(f);
                }
            }
        }
    }
    Ok(())
}

/// Every patch goes through the U-Net. `scaler` is `None` when `input` is
/// already scaled.
pub fn run_single_stage(
    input: &PatchBatch,
    scaler: Option<&ScalerParams>,
    unet: &UNet,
    task: Task,
    batch_size: usize,
    threads: usize,
) -> Result<RunOutput> {
    check_head(unet, task)?;
    CascadeConfig { task, routing: Routing::Argmax, batch_size, threads }.validate()?;
    let start = Instant::now();
    let x = scaled(input, scaler)?;
    let t1 = start.elapsed().as_secs_f64();
    let n = x.len();
    let idx: Vec<usize> = (0..n).collect();
    let mut planes = Planes::empty(task, n);
    let s2 = Instant::now();
    run_unet(unet, &x, &idx, &mut planes, batch_size, threads)?;
    let t2 = s2.elapsed().as_secs_f64();
    let total = start.elapsed().as_secs_f64();
    Ok(RunOutput {
        planes,
        routed: vec![true; n],
        stats: RoutingStats {
            patches_total: n,
            patches_routed: n,
            predicted_per_class: [0; 4],
            unet_invocations: n,
        },
        times: StageTimes {
            stage1_s: t1,
            stage2_s: t2,
            total_s: total,
        },
    })
}

/// Patch classes from the classifier and whether each is routed.
pub fn classify_patches(
    classifier: &Classifier,
    x: &PatchBatch,
    cfg: &CascadeConfig,
) -> Result<(Vec<FireClass>, Vec<bool>)> {
    let idx: Vec<usize> = (0..x.len()).collect();
    let chunks: Vec<&[usize]> = idx.chunks(cfg.batch_size).collect();
    let outs = map_ordered(&chunks, cfg.threads, |c| classifier.logits(&x.tensor(c)));
    let (mut classes, mut routed) = (Vec::with_capacity(x.len()), Vec::with_capacity(x.len()));
    for logits in outs {
        let logits = logits?;
        let arg = argmax_classes(&logits);
        match cfg.routing {
            Routing::Argmax => routed.extend(arg.iter().map(|&c| c != 0)),
            Routing::Threshold { tau } => {
                let p = softmax(&logits)?;
                routed.extend(p.data().chunks(4).map(|row| 1.0 - row[0] as f64 >= tau));
            }
        }
        classes.extend(arg.into_iter().map(|c| FireClass::from_code(c).expect("argmax < 4")));
    }
    Ok((classes, routed))
}

/// The two-stage cascade: classify every patch, run the U-Net only on
/// routed patches, and emit NoFire / zero FRP for the rest.
pub fn run_pyrofocus(
    input: &PatchBatch,
    scaler: Option<&ScalerParams>,
    classifier: &Classifier,
    unet: &UNet,
    cfg: &CascadeConfig,
) -> Result<RunOutput> {
    check_head(unet, cfg.task)?;
    cfg.validate()?;
    if classifier.spec().in_channels != unet.spec().in_channels {
        return Err(Error::config("classifier and U-Net expect different band counts"));
    }
    let start = Instant::now();
    let x = scaled(input, scaler)?;
    let (classes, routed) = classify_patches(classifier, &x, cfg)?;
    let t1 = start.elapsed().as_secs_f64();
    let n = x.len();
    let idx: Vec<usize> = (0..n).filter(|&i| routed[i]).collect();
    let mut planes = Planes::empty(cfg.task, n);
    let s2 = Instant::now();
    run_unet(unet, &x, &idx, &mut planes, cfg.batch_size, cfg.threads)?;
    let t2 = s2.elapsed().as_secs_f64();
    let total = start.elapsed().as_secs_f64();
    let mut per_class = [0; 4];
    for c in &classes {
        per_class[*c as usize] += 1;
    }
    Ok(RunOutput {
        planes,
        stats: RoutingStats {
            patches_total: n,
            patches_routed: idx.len(),
            predicted_per_class: per_class,
            unet_invocations: idx.len(),
        },
        routed,
        times: StageTimes {
            stage1_s: t1,
            stage2_s: t2,
            total_s: total,
        },
    })
}

/// Hex SHA-256 over a sequence of prediction planes.
pub fn prediction_hash<'a>(planes: impl IntoIterator<Item = &'a Planes>) -> String {
    let mut h = Sha256::new();
    for p in planes {
        h.update(p.bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
