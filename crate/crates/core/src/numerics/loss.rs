//! Scalar training objectives.

use serde::{Deserialize, Serialize};

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Splits a `[N, K, ...]` logits shape into `(N, K, spatial)`.
fn class_layout(shape: &[usize]) -> Result<(usize, usize, usize)> {
    if shape.len() < 2 {
        return Err(Error::dim(format!(
            "cross-entropy logits need a class axis, got shape {shape:?}"
        )));
    }
    Ok((shape[0], shape[1], shape[2..].iter().product()))
}

/// Softmax over axis 1 for every `(sample, position)`.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, k, s) = class_layout(logits.shape())?;
    let x = logits.data();
    let mut p = vec![T::ZERO; x.len()];
    for b in 0..n {
        let base = b * k * s;
        for pos in 0..s {
            let mut mx = x[base + pos];
            for c in 1..k {
                mx = mx.max(x[base + c * s + pos]);
            }
            let mut z = T::ZERO;
            for c in 0..k {
                let e = (x[base + c * s + pos] - mx).exp();
                p[base + c * s + pos] = e;
                z += e;
            }
            for c in 0..k {
                p[base + c * s + pos] /= z;
            }
        }
    }
    Ok(Tensor::from_parts(logits.shape().to_vec(), p))
}

/// Mean over all `(sample, position)` pairs of `-log softmax(logits)[target]`.
///
/// `targets` is laid out as `[N, spatial...]`. Returns the loss and the
/// softmax probabilities (kept for the backward pass).
pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor<T>, targets: &[usize]) -> Result<(T, Tensor<T>)> {
    let (n, k, s) = class_layout(logits.shape())?;
    if targets.len() != n * s {
        return Err(Error::dim(format!(
            "{} targets for {} prediction sites",
            targets.len(),
            n * s
        )));
    }
    if let Some(&bad) = targets.iter().find(|&&t| t >= k) {
        return Err(Error::Label(format!("target {bad} outside [0, {k})")));
    }
    let x = logits.data();
    let mut p = vec![T::ZERO; x.len()];
    let mut total = T::ZERO;
    for b in 0..n {
        let base = b * k * s;
        for pos in 0..s {
            let mut mx = x[base + pos];
            for c in 1..k {
                mx = mx.max(x[base + c * s + pos]);
            }
            let mut z = T::ZERO;
            for c in 0..k {
                let e = (x[base + c * s + pos] - mx).exp();
                p[base + c * s + pos] = e;
                z += e;
            }
            let t = targets[b * s + pos];
            total += z.ln() - (x[base + t * s + pos] - mx);
            for c in 0..k {
                p[base + c * s + pos] /= z;
            }
        }
    }
    let loss = total / T::from_f64((n * s) as f64);
    Ok((loss, Tensor::from_parts(logits.shape().to_vec(), p)))
}

/// `(softmax − onehot) · g / (N·spatial)`.
pub fn softmax_cross_entropy_backward<T: Scalar>(probs: &Tensor<T>, targets: &[usize], g: T) -> Tensor<T> {
    let (n, k, s) = class_layout(probs.shape()).expect("validated in forward");
    let scale = g / T::from_f64((n * s) as f64);
    let mut d: Vec<T> = probs.data().iter().map(|&p| p * scale).collect();
    for b in 0..n {
        for pos in 0..s {
            d[b * k * s + targets[b * s + pos] * s + pos] -= scale;
        }
    }
    Tensor::from_parts(probs.shape().to_vec(), d)
}

/// Weights of the composite FRP regression loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrpLossConfig {
    /// Masked MAE over fire pixels.
    pub alpha: f64,
    /// MSE over all pixels.
    pub beta: f64,
    /// Mean positive prediction over non-fire pixels.
    pub gamma: f64,
}

impl Default for FrpLossConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.1,
            gamma: 0.5,
        }
    }
}

impl FrpLossConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !(ok(self.alpha) && ok(self.beta) && ok(self.gamma)) || self.alpha <= 0.0 {
            return Err(Error::config(format!(
                "FRP loss weights must be non-negative with alpha > 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Value of the composite FRP loss:
/// `α·mean_fire|p − t| + β·mean_all (p − t)² + γ·mean_nonfire max(p, 0)`.
/// A mean over an empty pixel set is 0.
pub fn frp_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>, fire: &[bool], cfg: &FrpLossConfig) -> Result<T> {
    cfg.validate()?;
    if pred.shape() != target.shape() || fire.len() != pred.len() {
        return Err(Error::dim(format!(
            "FRP loss: prediction {:?}, target {:?}, mask of {} pixels",
            pred.shape(),
            target.shape(),
            fire.len()
        )));
    }
    if !target.is_empty() && target.data().iter().all(|v| v.is_nan()) {
        return Err(Error::data("FRP target is entirely NaN"));
    }
    if let Some(v) = target.data().iter().find(|v| !v.is_finite() || **v < T::ZERO) {
        return Err(Error::data(format!("FRP target contains invalid value {v:?}")));
    }
    let (mut mae, mut mse, mut fp) = (T::ZERO, T::ZERO, T::ZERO);
    let mut n_fire = 0usize;
    for ((&p, &t), &f) in pred.data().iter().zip(target.data()).zip(fire) {
        let d = p - t;
        mse += d * d;
        if f {
            mae += d.abs();
            n_fire += 1;
        } else {
            fp += p.max(T::ZERO);
        }
    }
    let n_all = pred.len();
    let n_clear = n_all - n_fire;
    let mean = |acc: T, n: usize| if n == 0 { T::ZERO } else { acc / T::from_f64(n as f64) };
    Ok(T::from_f64(cfg.alpha) * mean(mae, n_fire)
        + T::from_f64(cfg.beta) * mean(mse, n_all)
        + T::from_f64(cfg.gamma) * mean(fp, n_clear))
}

/// Gradient of [`frp_loss`] w.r.t. the prediction (subgradient 0 at kinks).
pub fn frp_loss_backward<T: Scalar>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    fire: &[bool],
    cfg: &FrpLossConfig,
    g: T,
) -> Tensor<T> {
    let n_all = pred.len();
    let n_fire = fire.iter().filter(|&&f| f).count();
    let n_clear = n_all - n_fire;
    let inv = |n: usize| if n == 0 { T::ZERO } else { T::ONE / T::from_f64(n as f64) };
    let a = g * T::from_f64(cfg.alpha) * inv(n_fire);
    let b = g * T::from_f64(2.0 * cfg.beta) * inv(n_all);
    let c = g * T::from_f64(cfg.gamma) * inv(n_clear);
    let data = pred
        .data()
        .iter()
        .zip(target.data())
        .zip(fire)
        .map(|((&p, &t), &f)| {
            let d = p - t;
            let mut grad = b * d;
            if f {
                if d > T::ZERO {
                    grad += a;
                } else if d < T::ZERO {
                    grad -= a;
                }
            } else if p > T::ZERO {
                grad += c;
            }
            grad
        })
        .collect();
    Tensor::from_parts(pred.shape().to_vec(), data)
}
