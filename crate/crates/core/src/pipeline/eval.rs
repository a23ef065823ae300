//! Evaluation of models and pipelines on prepared splits.

use super::cascade::{PatchBatch, Planes};
use super::metrics::{masked_mae, EvalMetrics, MaskedMae};
use crate::data::PatchSet;
use crate::error::{Error, Result};
use crate::models::{argmax_classes, Classifier};

/// Already-scaled inputs of a prepared set, for the pipelines.
pub fn scaled_batch(set: &PatchSet) -> PatchBatch {
    PatchBatch {
        channels: set.channels,
        data: set.x.clone(),
    }
}

/// Pixel metrics of pipeline output against the set's labels.
pub fn evaluate_planes(planes: &Planes, set: &PatchSet) -> Result<EvalMetrics> {
    if planes.patches() != set.len() {
        return Err(Error::dim(format!("{} predicted patches for {}", planes.patches(), set.len())));
    }
    match planes {
        Planes::Seg(p) => EvalMetrics::from_predictions(p, &set.mask, 4, None),
        Planes::Frp(p) => EvalMetrics::for_frp(p, &set.frp, &set.mask),
    }
}

/// Patch-level metrics of a classifier.
pub fn evaluate_classifier(classifier: &Classifier, set: &PatchSet, batch_size: usize) -> Result<EvalMetrics> {
    let idx: Vec<usize> = (0..set.len()).collect();
    let mut pred = Vec::with_capacity(set.len());
    for chunk in idx.chunks(batch_size.max(1)) {
        pred.extend(argmax_classes(&classifier.logits(&set.inputs(chunk))?));
    }
    let truth: Vec<u8> = set.labels.iter().map(|l| l.code()).collect();
    EvalMetrics::from_predictions(&pred, &truth, 4, None)
}

/// Masked MAE of predicting the mean training fire-pixel FRP everywhere.
pub fn frp_mean_baseline(train: &PatchSet, test: &PatchSet) -> Result<MaskedMae> {
    let fire: Vec<f64> = train
        .frp
        .iter()
        .zip(&train.mask)
        .filter(|(_, &m)| m != 0)
        .map(|(&f, _)| f as f64)
        .collect();
    if fire.is_empty() {
        return Err(Error::data("training split has no fire pixels"));
    }
    let mean = (fire.iter().sum::<f64>() / fire.len() as f64) as f32;
    let truth_fire: Vec<bool> = test.mask.iter().map(|&c| c != 0).collect();
    masked_mae(&vec![mean; test.frp.len()], &test.frp, &truth_fire)
}
