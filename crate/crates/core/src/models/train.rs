//! Deterministic mini-batch training with best-validation selection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::classifier::{build_classifier, Classifier, ClassifierSpec};
use super::layers::{apply_bn_stats, Cx, Mode};
use super::params::ParamStore;
use super::unet::{aux_weight, build_unet, UNet, UNetHead, UNetSpec};
use crate::data::{PatchSet, PATCH_H, PATCH_W};
use crate::error::{Error, Result};
use crate::numerics::{AdamConfig, AdamState, FrpLossConfig, Tensor, Var};
use crate::pipeline::metrics::{confusion_matrix, masked_mae, miou_from_confusion};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub frp_loss: FrpLossConfig,
}

impl TrainConfig {
    /// 30 epochs, batch 128, learning rate 0.001.
    pub fn classifier(seed: u64) -> Self {
        Self {
            epochs: 30,
            batch_size: 128,
            lr: 1e-3,
            seed,
            frp_loss: FrpLossConfig::default(),
        }
    }

    /// 30 epochs, batch 32, learning rate 0.001.
    pub fn unet(seed: u64) -> Self {
        Self {
            batch_size: 32,
            ..Self::classifier(seed)
        }
    }

    fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("epochs and batch size must be positive"));
        }
        self.frp_loss.validate()
    }
}

/// Per-epoch losses and validation metric (accuracy for classifiers, MIoU
/// for segmentation, masked MAE for FRP).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_metric: f64,
}

/// Anything the generic loop can train.
trait Trainable {
    fn store(&self) -> &ParamStore;
    fn store_mut(&mut self) -> &mut ParamStore;
    /// Mean loss over the batch `idx` of `set`.
    fn loss(&self, cx: &Cx, set: &PatchSet, idx: &[usize]) -> Result<Var<f32>>;
    /// `(mean loss, metric)` over the whole set in eval mode.
    fn evaluate(&self, set: &PatchSet) -> Result<(f64, f64)>;
}

const EVAL_BATCH: usize = 64;

fn batches(n: usize, size: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..n).step_by(size).map(move |s| (s..(s + size).min(n)).collect())
}

fn fit<M: Trainable>(model: &mut M, train: &PatchSet, val: &PatchSet, cfg: &TrainConfig) -> Result<Vec<EpochRecord>> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::data(format!(
            "training needs non-empty splits (train {}, val {})",
            train.len(),
            val.len()
        )));
    }
    let ids = model.store().trainable_ids();
    let mut adam = AdamState::<f32>::new(AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, ParamStore)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut seen) = (0.0f64, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let (grads, stats, loss) = {
                let cx = Cx::new(model.store(), Mode::Train);
                let loss = model.loss(&cx, train, chunk)?;
                let g = loss.backward()?;
                (cx.collect_grads(&g, &ids), cx.take_bn_stats(), loss.value().item() as f64)
            };
            if !loss.is_finite() {
                return Err(Error::data(format!("non-finite training loss at epoch {epoch}")));
            }
            total += loss * chunk.len() as f64;
            seen += chunk.len();
            let store = model.store_mut();
            let mut params = store.take(&ids);
            let step = adam.step(&mut params, &grads);
            store.put(&ids, params);
            step?;
            apply_bn_stats(store, stats);
        }
        let (val_loss, val_metric) = model.evaluate(val)?;
        let rec = EpochRecord {
            epoch,
            train_loss: total / seen as f64,
            val_loss,
            val_metric,
        };
        log::info!(
            "epoch {epoch}/{}: train {:.5} val {:.5} metric {:.4}",
            cfg.epochs,
            rec.train_loss,
            rec.val_loss,
            rec.val_metric
        );
        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, model.store().clone()));
        }
        history.push(rec);
    }
    if let Some((_, store)) = best {
        *model.store_mut() = store;
    }
    Ok(history)
}

impl Trainable for Classifier {
    fn store(&self) -> &ParamStore {
        Classifier::store(self)
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        Classifier::store_mut(self)
    }

    fn loss(&self, cx: &Cx, set: &PatchSet, idx: &[usize]) -> Result<Var<f32>> {
        let x = Var::constant(set.inputs(idx));
        self.forward(cx, &x)?.cross_entropy(&set.label_codes(idx))
    }

    fn evaluate(&self, set: &PatchSet) -> Result<(f64, f64)> {
        let cx = Cx::new(Classifier::store(self), Mode::Eval);
        let (mut loss, mut correct) = (0.0, 0usize);
        for idx in batches(set.len(), EVAL_BATCH) {
            let logits = self.forward(&cx, &Var::constant(set.inputs(&idx)))?;
            let labels = set.label_codes(&idx);
            loss += logits.cross_entropy(&labels)?.value().item() as f64 * idx.len() as f64;
            let pred = argmax_rows(logits.value());
            correct += pred.iter().zip(&labels).filter(|(p, l)| **p as usize == **l).count();
        }
        Ok((loss / set.len() as f64, correct as f64 / set.len() as f64))
    }
}

/// Argmax over axis 1 of `[N, K, ...]`, first maximum on ties.
pub fn argmax_classes(t: &Tensor<f32>) -> Vec<u8> {
    let (n, k) = (t.shape()[0], t.shape()[1]);
    let s: usize = t.shape()[2..].iter().product();
    let d = t.data();
    let mut out = Vec::with_capacity(n * s);
    for b in 0..n {
        for pos in 0..s {
            let mut best = 0;
            for c in 1..k {
                if d[(b * k + c) * s + pos] > d[(b * k + best) * s + pos] {
                    best = c;
                }
            }
            out.push(best as u8);
        }
    }
    out
}

fn argmax_rows(t: &Tensor<f32>) -> Vec<u8> {
    argmax_classes(t)
}

/// Class-majority downsampling of `[N][H][W]` masks by `f`; ties go to the
/// more severe class.
pub fn downsample_majority(mask: &[u8], n: usize, h: usize, w: usize, f: usize) -> Vec<u8> {
    let (oh, ow) = (h / f, w / f);
    let mut out = Vec::with_capacity(n * oh * ow);
    for b in 0..n {
        for r in 0..oh {
            for c in 0..ow {
                let mut counts = [0usize; 4];
                for dr in 0..f {
                    for dc in 0..f {
                        counts[mask[b * h * w + (r * f + dr) * w + c * f + dc] as usize] += 1;
                    }
                }
                let mut best = 0;
                for k in 1..4 {
                    if counts[k] >= counts[best] {
                        best = k;
                    }
                }
                out.push(best as u8);
            }
        }
    }
    out
}

/// Block-mean downsampling of `[N][H][W]` planes by `f`.
pub fn downsample_mean(plane: &[f32], n: usize, h: usize, w: usize, f: usize) -> Vec<f32> {
    let (oh, ow) = (h / f, w / f);
    let inv = 1.0 / (f * f) as f32;
    let mut out = Vec::with_capacity(n * oh * ow);
    for b in 0..n {
        for r in 0..oh {
            for c in 0..ow {
                let mut s = 0.0;
                for dr in 0..f {
                    for dc in 0..f {
                        s += plane[b * h * w + (r * f + dr) * w + c * f + dc];
                    }
                }
                out.push(s * inv);
            }
        }
    }
    out
}

/// Whether any pixel of each `f×f` block is fire.
fn downsample_any_fire(mask: &[u8], n: usize, h: usize, w: usize, f: usize) -> Vec<bool> {
    let (oh, ow) = (h / f, w / f);
    let mut out = Vec::with_capacity(n * oh * ow);
    for b in 0..n {
        for r in 0..oh {
            for c in 0..ow {
                let any = (0..f).any(|dr| (0..f).any(|dc| mask[b * h * w + (r * f + dr) * w + c * f + dc] != 0));
                out.push(any);
            }
        }
    }
    out
}

impl UNet {
    /// Deep-supervised objective: main loss plus `0.5^l` times the loss of
    /// the auxiliary output at level `l` against downsampled targets.
    fn objective(&self, cx: &Cx, set: &PatchSet, idx: &[usize], frp_cfg: &FrpLossConfig) -> Result<(Var<f32>, Var<f32>)> {
        let n = idx.len();
        let x = Var::constant(set.inputs(idx));
        let out = self.forward(cx, &x)?;
        let mask = set.masks(idx);
        let (h, w) = (PATCH_H, PATCH_W);
        let level_loss = |v: &Var<f32>, level: usize| -> Result<Var<f32>> {
            let f = 1 << level;
            match self.spec().head {
                UNetHead::Segmentation => {
                    let m = if f == 1 { mask.clone() } else { downsample_majority(&mask, n, h, w, f) };
                    let targets: Vec<usize> = m.into_iter().map(usize::from).collect();
                    v.cross_entropy(&targets)
                }
                UNetHead::Frp => {
                    let frp = set.frp_targets(idx);
                    let (t, fire) = if f == 1 {
                        (frp, mask.iter().map(|&c| c != 0).collect())
                    } else {
                        (
                            downsample_mean(&frp, n, h, w, f),
                            downsample_any_fire(&mask, n, h, w, f),
                        )
                    };
                    let t = Tensor::new(vec![n, 1, h / f, w / f], t)?;
                    v.frp_loss(&t, &fire, frp_cfg)
                }
            }
        };
        let main = level_loss(&out.main, 0)?;
        let mut total = main.clone();
        for (level, aux) in &out.aux {
            total = total.add(&level_loss(aux, *level)?.scale(aux_weight(*level) as f32))?;
        }
        Ok((total, out.main))
    }
}

struct UNetTrainer<'a> {
    net: &'a mut UNet,
    frp: FrpLossConfig,
}

impl Trainable for UNetTrainer<'_> {
    fn store(&self) -> &ParamStore {
        self.net.store()
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        self.net.store_mut()
    }

    fn loss(&self, cx: &Cx, set: &PatchSet, idx: &[usize]) -> Result<Var<f32>> {
        Ok(self.net.objective(cx, set, idx, &self.frp)?.0)
    }

    fn evaluate(&self, set: &PatchSet) -> Result<(f64, f64)> {
        let cx = Cx::new(self.net.store(), Mode::Eval);
        let mut loss = 0.0;
        let mut pred_cls = Vec::new();
        let mut pred_frp = Vec::new();
        for idx in batches(set.len(), EVAL_BATCH) {
            let (l, main) = self.net.objective(&cx, set, &idx, &self.frp)?;
            loss += l.value().item() as f64 * idx.len() as f64;
            match self.net.spec().head {
                UNetHead::Segmentation => pred_cls.extend(argmax_classes(main.value())),
                UNetHead::Frp => pred_frp.extend(main.value().data().iter().map(|v| v.max(0.0))),
            }
        }
        let metric = match self.net.spec().head {
            UNetHead::Segmentation => miou_from_confusion(&confusion_matrix(&pred_cls, &set.mask, 4)?),
            UNetHead::Frp => {
                let fire: Vec<bool> = set.mask.iter().map(|&c| c != 0).collect();
                masked_mae(&pred_frp, &set.frp, &fire)?.value
            }
        };
        Ok((loss / set.len() as f64, metric))
    }
}

/// A trained model with its per-epoch history; parameters are those of the
/// epoch with the lowest validation loss.
pub struct Trained<M> {
    pub model: M,
    pub history: Vec<EpochRecord>,
}

pub fn train_classifier(train: &PatchSet, val: &PatchSet, spec: ClassifierSpec, cfg: &TrainConfig) -> Result<Trained<Classifier>> {
    let mut model = build_classifier(spec, cfg.seed)?;
    let history = fit(&mut model, train, val, cfg)?;
    Ok(Trained { model, history })
}

pub fn train_unet(train: &PatchSet, val: &PatchSet, spec: UNetSpec, cfg: &TrainConfig) -> Result<Trained<UNet>> {
    let mut model = build_unet(spec, cfg.seed)?;
    let history = fit(
        &mut UNetTrainer {
            net: &mut model,
            frp: cfg.frp_loss,
        },
        train,
        val,
        cfg,
    )?;
    Ok(Trained { model, history })
}
