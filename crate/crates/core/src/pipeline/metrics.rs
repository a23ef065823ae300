//! Classification, segmentation and regression metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `counts[i][j]` = number of samples with label `i` predicted as `j`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

fn check_codes(values: &[u8], k: usize, what: &str) -> Result<()> {
    match values.iter().find(|&&v| v as usize >= k) {
        Some(v) => Err(Error::Label(format!("{what} value {v} outside [0, {k})"))),
        None => Ok(()),
    }
}

pub fn confusion_matrix(preds: &[u8], labels: &[u8], k: usize) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() {
        return Err(Error::data(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    check_codes(preds, k, "prediction")?;
    check_codes(labels, k, "label")?;
    let mut counts = vec![vec![0u64; k]; k];
    for (&p, &l) in preds.iter().zip(labels) {
        counts[l as usize][p as usize] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

impl ConfusionMatrix {
    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Row-normalized matrix and, per row, whether it had zero support
    /// (such rows are left as zeros).
    pub fn normalized(&self) -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut empty = Vec::with_capacity(self.k());
        let rows = self
            .counts
            .iter()
            .map(|row| {
                let s: u64 = row.iter().sum();
                empty.push(s == 0);
                row.iter().map(|&c| if s == 0 { 0.0 } else { c as f64 / s as f64 }).collect()
            })
            .collect();
        (rows, empty)
    }

    pub fn accuracy(&self) -> f64 {
        let t = self.total();
        if t == 0 {
            return 0.0;
        }
        (0..self.k()).map(|i| self.counts[i][i]).sum::<u64>() as f64 / t as f64
    }

    /// Per-class `(precision, recall, f1)`; 0 where undefined.
    pub fn per_class(&self) -> Vec<(f64, f64, f64)> {
        (0..self.k())
            .map(|c| {
                let tp = self.counts[c][c] as f64;
                let predicted: u64 = (0..self.k()).map(|i| self.counts[i][c]).sum();
                let actual: u64 = self.counts[c].iter().sum();
                let p = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
                let r = if actual == 0 { 0.0 } else { tp / actual as f64 };
                let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
                (p, r, f)
            })
            .collect()
    }
}

/// Mean IoU over classes present in either mask.
pub fn miou(pred: &[u8], truth: &[u8], k: usize) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::dim(format!("masks of {} and {} pixels", pred.len(), truth.len())));
    }
    if pred.is_empty() {
        return Err(Error::data("MIoU of empty masks"));
    }
    let cm = confusion_matrix(pred, truth, k)?;
    Ok(miou_from_confusion(&cm))
}

pub fn miou_from_confusion(cm: &ConfusionMatrix) -> f64 {
    let k = cm.k();
    let mut sum = 0.0;
    let mut classes = 0;
    for c in 0..k {
        let inter = cm.counts[c][c];
        let truth: u64 = cm.counts[c].iter().sum();
        let pred: u64 = (0..k).map(|i| cm.counts[i][c]).sum();
        let union = truth + pred - inter;
        if union > 0 {
            sum += inter as f64 / union as f64;
            classes += 1;
        }
    }
    if classes == 0 {
        0.0
    } else {
        sum / classes as f64
    }
}

/// Mean absolute error over fire pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskedMae {
    pub value: f64,
    pub pixels: u64,
    /// No fire pixels; `value` is 0 by convention.
    pub empty: bool,
}

pub fn masked_mae(pred: &[f32], truth: &[f32], fire: &[bool]) -> Result<MaskedMae> {
    if pred.len() != truth.len() || pred.len() != fire.len() {
        return Err(Error::dim(format!(
            "masked MAE over {}/{}/{} values",
            pred.len(),
            truth.len(),
            fire.len()
        )));
    }
    let (mut sum, mut n) = (0.0f64, 0u64);
    for ((&p, &t), &f) in pred.iter().zip(truth).zip(fire) {
        if f {
            sum += (p as f64 - t as f64).abs();
            n += 1;
        }
    }
    Ok(MaskedMae {
        value: if n == 0 { 0.0 } else { sum / n as f64 },
        pixels: n,
        empty: n == 0,
    })
}

/// Summary of a segmentation or FRP evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub confusion: Vec<Vec<u64>>,
    pub confusion_normalized: Vec<Vec<f64>>,
    pub zero_support_rows: Vec<bool>,
    pub accuracy: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub miou: f64,
    pub masked_mae: Option<MaskedMae>,
    /// Fraction of NoFire pixels predicted as fire (or with positive FRP).
    pub false_positive_rate: f64,
}

impl EvalMetrics {
    /// From per-pixel class predictions; `frp` adds the regression terms
    /// as `(predicted, true)` scaled planes.
    pub fn from_predictions(pred: &[u8], truth: &[u8], k: usize, frp: Option<(&[f32], &[f32])>) -> Result<Self> {
        let cm = confusion_matrix(pred, truth, k)?;
        let (norm, empty) = cm.normalized();
        let pc = cm.per_class();
        let fire: Vec<bool> = truth.iter().map(|&c| c != 0).collect();
        let masked = match frp {
            Some((p, t)) => Some(masked_mae(p, t, &fire)?),
            None => None,
        };
        let clear = fire.iter().filter(|f| !**f).count();
        let fp = match frp {
            Some((p, _)) => (0..truth.len()).filter(|&i| !fire[i] && p[i] > 0.0).count(),
            None => (0..truth.len()).filter(|&i| !fire[i] && pred[i] != 0).count(),
        };
        Ok(Self {
            accuracy: cm.accuracy(),
            miou: miou_from_confusion(&cm),
            precision: pc.iter().map(|x| x.0).collect(),
            recall: pc.iter().map(|x| x.1).collect(),
            f1: pc.iter().map(|x| x.2).collect(),
            confusion: cm.counts,
            confusion_normalized: norm,
            zero_support_rows: empty,
            masked_mae: masked,
            false_positive_rate: if clear == 0 { 0.0 } else { fp as f64 / clear as f64 },
        })
    }
}

impl EvalMetrics {
    /// FRP evaluation: masked MAE plus a binary (NoFire vs fire) detection
    /// confusion in which a pixel counts as detected when its FRP is positive.
    pub fn for_frp(pred: &[f32], truth: &[f32], truth_mask: &[u8]) -> Result<Self> {
        if pred.len() != truth_mask.len() {
            return Err(Error::dim("FRP prediction and mask sizes differ"));
        }
        let p: Vec<u8> = pred.iter().map(|&v| u8::from(v > 0.0)).collect();
        let t: Vec<u8> = truth_mask.iter().map(|&c| u8::from(c != 0)).collect();
        Self::from_predictions(&p, &t, 2, Some((pred, truth)))
    }
}
