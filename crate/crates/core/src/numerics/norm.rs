//! Per-channel batch normalization for `[N, C, H, W]` tensors.

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Quantities saved by the training-mode forward pass.
#[derive(Clone, Debug)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    /// Biased (population) variance of the batch, used for normalization.
    pub var: Vec<T>,
    pub inv_std: Vec<T>,
    /// Number of elements per channel (N·H·W).
    pub count: usize,
}

impl<T: Scalar> BatchStats<T> {
    /// Unbiased variance, the value blended into running statistics.
    pub fn unbiased_var(&self) -> Vec<T> {
        let f = T::from_f64(self.count as f64 / (self.count as f64 - 1.0));
        self.var.iter().map(|&v| v * f).collect()
    }
}

fn check_affine<T: Scalar>(c: usize, gamma: &Tensor<T>, beta: &Tensor<T>) -> Result<()> {
    if gamma.len() != c || beta.len() != c {
        return Err(Error::dim(format!(
            "batchnorm over {c} channels given gamma/beta of length {}/{}",
            gamma.len(),
            beta.len()
        )));
    }
    Ok(())
}

/// Normalizes by batch statistics. Returns `(y, x_hat, stats)`.
pub fn batchnorm_train<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, BatchStats<T>)> {
    let [n, c, h, w] = x.dims4()?;
    check_affine(c, gamma, beta)?;
    let hw = h * w;
    let count = n * hw;
    if count < 2 {
        return Err(Error::InvalidBatch(format!(
            "training-mode batchnorm needs at least 2 values per channel, got {count}"
        )));
    }
    let data = x.data();
    let inv_count = T::ONE / T::from_f64(count as f64);
    let eps = T::from_f64(BN_EPS);
    let mut mean = vec![T::ZERO; c];
    let mut var = vec![T::ZERO; c];
    for ch in 0..c {
        let mut acc = T::ZERO;
        for s in 0..n {
            for &v in &data[(s * c + ch) * hw..(s * c + ch + 1) * hw] {
                acc += v;
            }
        }
        let m = acc * inv_count;
        let mut sq = T::ZERO;
        for s in 0..n {
            for &v in &data[(s * c + ch) * hw..(s * c + ch + 1) * hw] {
                let d = v - m;
                sq += d * d;
            }
        }
        mean[ch] = m;
        var[ch] = sq * inv_count;
    }
    let inv_std: Vec<T> = var.iter().map(|&v| T::ONE / (v + eps).sqrt()).collect();
    let mut xhat = vec![T::ZERO; data.len()];
    let mut y = vec![T::ZERO; data.len()];
    for s in 0..n {
        for ch in 0..c {
            let (g, b) = (gamma.data()[ch], beta.data()[ch]);
            let range = (s * c + ch) * hw..(s * c + ch + 1) * hw;
            for ((&v, xh), yv) in data[range.clone()]
                .iter()
                .zip(&mut xhat[range.clone()])
                .zip(&mut y[range])
            {
                *xh = (v - mean[ch]) * inv_std[ch];
                *yv = g * *xh + b;
            }
        }
    }
    Ok((
        Tensor::from_parts(x.shape().to_vec(), y),
        Tensor::from_parts(x.shape().to_vec(), xhat),
        BatchStats {
            mean,
            var,
            inv_std,
            count,
        },
    ))
}

/// Returns `(dx, dgamma, dbeta)` for the training-mode forward pass.
pub fn batchnorm_train_backward<T: Scalar>(
    xhat: &Tensor<T>,
    gamma: &Tensor<T>,
    inv_std: &[T],
    dy: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let [n, c, h, w] = xhat.dims4().expect("xhat is rank 4");
    let hw = h * w;
    let count = T::from_f64((n * hw) as f64);
    let (xh, g) = (xhat.data(), dy.data());
    let mut dgamma = vec![T::ZERO; c];
    let mut dbeta = vec![T::ZERO; c];
    for s in 0..n {
        for ch in 0..c {
            let range = (s * c + ch) * hw..(s * c + ch + 1) * hw;
            for (&gv, &xv) in g[range.clone()].iter().zip(&xh[range]) {
                dbeta[ch] += gv;
                dgamma[ch] += gv * xv;
            }
        }
    }
    let mut dx = vec![T::ZERO; xh.len()];
    for s in 0..n {
        for ch in 0..c {
            let k = gamma.data()[ch] * inv_std[ch] / count;
            let range = (s * c + ch) * hw..(s * c + ch + 1) * hw;
            for ((d, &gv), &xv) in dx[range.clone()].iter_mut().zip(&g[range.clone()]).zip(&xh[range]) {
                *d = k * (count * gv - dbeta[ch] - xv * dgamma[ch]);
            }
        }
    }
    (
        Tensor::from_parts(xhat.shape().to_vec(), dx),
        Tensor::from_parts(vec![c], dgamma),
        Tensor::from_parts(vec![c], dbeta),
    )
}

/// Eval-mode normalization with fixed statistics: `γ·(x − μ)/√(σ² + ε) + β`.
pub fn batchnorm_eval<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    mean: &[T],
    var: &[T],
) -> Result<(Tensor<T>, Vec<T>)> {
    let [n, c, h, w] = x.dims4()?;
    check_affine(c, gamma, beta)?;
    if mean.len() != c || var.len() != c {
        return Err(Error::dim("running statistics do not match channel count"));
    }
    let eps = T::from_f64(BN_EPS);
    let inv_std: Vec<T> = var.iter().map(|&v| T::ONE / (v + eps).sqrt()).collect();
    let hw = h * w;
    let mut y = vec![T::ZERO; x.len()];
    for s in 0..n {
        for ch in 0..c {
            let scale = gamma.data()[ch] * inv_std[ch];
            let shift = beta.data()[ch] - mean[ch] * scale;
            let range = (s * c + ch) * hw..(s * c + ch + 1) * hw;
            for (yv, &v) in y[range.clone()].iter_mut().zip(&x.data()[range]) {
                *yv = v * scale + shift;
            }
        }
    }
    Ok((Tensor::from_parts(x.shape().to_vec(), y), inv_std))
}

/// Returns `(dx, dgamma, dbeta)` for the eval-mode transform.
pub fn batchnorm_eval_backward<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    mean: &[T],
    inv_std: &[T],
    dy: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let [n, c, h, w] = x.dims4().expect("rank 4");
    let hw = h * w;
    let mut dx = vec![T::ZERO; x.len()];
    let mut dgamma = vec![T::ZERO; c];
    let mut dbeta = vec![T::ZERO; c];
    for s in 0..n {
        for ch in 0..c {
            let scale = gamma.data()[ch] * inv_std[ch];
            let range = (s * c + ch) * hw..(s * c + ch + 1) * hw;
            for ((d, &g), &v) in dx[range.clone()]
                .iter_mut()
                .zip(&dy.data()[range.clone()])
                .zip(&x.data()[range])
            {
                *d = g * scale;
                dbeta[ch] += g;
                dgamma[ch] += g * (v - mean[ch]) * inv_std[ch];
            }
        }
    }
    (
        Tensor::from_parts(x.shape().to_vec(), dx),
        Tensor::from_parts(vec![c], dgamma),
        Tensor::from_parts(vec![c], dbeta),
    )
}
