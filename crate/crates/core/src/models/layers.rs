//! Layer building blocks and the per-pass forward context.

use std::cell::RefCell;

use super::params::ParamStore;
use crate::error::Result;
use crate::numerics::norm::BN_MOMENTUM;
use crate::numerics::{BatchStats, Gradients, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch norm, gradients recorded.
    Train,
    /// Running statistics, no gradient bookkeeping.
    Eval,
}

/// State of a single forward pass: which store to read, in which mode, and
/// the leaves/statistics the training loop needs afterwards.
pub struct Cx<'s> {
    store: &'s ParamStore,
    mode: Mode,
    leaves: RefCell<Vec<Option<Var<f32>>>>,
    bn_stats: RefCell<Vec<(BatchNorm, BatchStats<f32>)>>,
}

impl<'s> Cx<'s> {
    pub fn new(store: &'s ParamStore, mode: Mode) -> Self {
        Self {
            store,
            mode,
            leaves: RefCell::new(vec![None; store.len()]),
            bn_stats: RefCell::new(Vec::new()),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Graph leaf for parameter `id`; one leaf per parameter per pass.
    pub fn p(&self, id: usize) -> Var<f32> {
        if self.mode == Mode::Eval || !self.store.is_trainable(id) {
            return Var::constant(self.store.value(id).clone());
        }
        self.leaves.borrow_mut()[id]
            .get_or_insert_with(|| Var::param(self.store.value(id).clone()))
            .clone()
    }

    /// Gradients for `ids`, zero for parameters that did not take part.
    pub fn collect_grads(&self, grads: &Gradients<f32>, ids: &[usize]) -> Vec<Tensor<f32>> {
        let leaves = self.leaves.borrow();
        ids.iter()
            .map(|&i| match &leaves[i] {
                Some(v) => grads.get_or_zeros(v),
                None => Tensor::zeros(self.store.value(i).shape().to_vec()),
            })
            .collect()
    }

    /// Batch statistics gathered by train-mode batch norms, in call order.
    pub fn take_bn_stats(&self) -> Vec<(BatchNorm, BatchStats<f32>)> {
        std::mem::take(&mut self.bn_stats.borrow_mut())
    }
}

/// Folds gathered batch statistics into the running estimates.
pub fn apply_bn_stats(store: &mut ParamStore, stats: Vec<(BatchNorm, BatchStats<f32>)>) {
    let m = BN_MOMENTUM as f32;
    for (bn, s) in stats {
        for (r, &b) in store.value_mut(bn.running_mean).data_mut().iter_mut().zip(&s.mean) {
            *r = (1.0 - m) * *r + m * b;
        }
        let unbiased = s.unbiased_var();
        for (r, b) in store.value_mut(bn.running_var).data_mut().iter_mut().zip(unbiased) {
            *r = (1.0 - m) * *r + m * b;
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Conv {
    weight: usize,
    bias: Option<usize>,
    stride: usize,
    pad: usize,
}

impl Conv {
    pub fn new(store: &mut ParamStore, name: &str, cin: usize, cout: usize, k: usize, stride: usize, bias: bool) -> Self {
        let weight = store.he_normal(format!("{name}.weight"), vec![cout, cin, k, k], cin * k * k);
        let bias = bias.then(|| store.constant(format!("{name}.bias"), vec![cout], 0.0));
        Self { weight, bias, stride, pad: k / 2 }
    }

    pub fn forward(&self, cx: &Cx, x: &Var<f32>) -> Result<Var<f32>> {
        let y = x.conv2d(&cx.p(self.weight), self.stride, self.pad)?;
        match self.bias {
            Some(b) => y.add_channel_bias(&cx.p(b)),
            None => Ok(y),
        }
    }
}

/// 2×2, stride-2 transposed convolution with bias: doubles spatial dims.
#[derive(Clone, Copy, Debug)]
pub struct UpConv {
    weight: usize,
    bias: usize,
}

impl UpConv {
    pub fn new(store: &mut ParamStore, name: &str, cin: usize, cout: usize) -> Self {
        let weight = store.he_normal(format!("{name}.weight"), vec![cin, cout, 2, 2], cin);
        let bias = store.constant(format!("{name}.bias"), vec![cout], 0.0);
        Self { weight, bias }
    }

    pub fn forward(&self, cx: &Cx, x: &Var<f32>) -> Result<Var<f32>> {
        x.conv_transpose2d(&cx.p(self.weight), 2)?.add_channel_bias(&cx.p(self.bias))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BatchNorm {
    gamma: usize,
    beta: usize,
    running_mean: usize,
    running_var: usize,
}

impl BatchNorm {
    pub fn new(store: &mut ParamStore, name: &str, c: usize) -> Self {
        Self {
            gamma: store.constant(format!("{name}.gamma"), vec![c], 1.0),
            beta: store.constant(format!("{name}.beta"), vec![c], 0.0),
            running_mean: store.buffer(format!("{name}.running_mean"), vec![c], 0.0),
            running_var: store.buffer(format!("{name}.running_var"), vec![c], 1.0),
        }
    }

    pub fn forward(&self, cx: &Cx, x: &Var<f32>) -> Result<Var<f32>> {
        let (g, b) = (cx.p(self.gamma), cx.p(self.beta));
        match cx.mode {
            Mode::Train => {
                let (y, stats) = x.batchnorm_train(&g, &b)?;
                cx.bn_stats.borrow_mut().push((*self, stats));
                Ok(y)
            }
            Mode::Eval => x.batchnorm_eval(
                &g,
                &b,
                cx.store.value(self.running_mean).data(),
                cx.store.value(self.running_var).data(),
            ),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Linear {
    weight: usize,
    bias: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, fin: usize, fout: usize) -> Self {
        Self {
            weight: store.he_normal(format!("{name}.weight"), vec![fout, fin], fin),
            bias: store.constant(format!("{name}.bias"), vec![fout], 0.0),
        }
    }

    pub fn forward(&self, cx: &Cx, x: &Var<f32>) -> Result<Var<f32>> {
        x.linear(&cx.p(self.weight), &cx.p(self.bias))
    }
}

/// Two 3×3 conv + batch-norm stages with an identity or projected skip:
/// `relu(bn(conv(relu(bn(conv(x))))) + skip(x))`.
///
/// The first convolution carries the stride; the projection (1×1 conv +
/// batch norm) is used whenever the stride or channel count changes.
#[derive(Clone, Copy, Debug)]
pub struct ResidualBlock {
    conv1: Conv,
    bn1: BatchNorm,
    conv2: Conv,
    bn2: BatchNorm,
    proj: Option<(Conv, BatchNorm)>,
}

impl ResidualBlock {
    pub fn new(store: &mut ParamStore, name: &str, cin: usize, cout: usize, stride: usize) -> Self {
        let conv1 = Conv::new(store, &format!("{name}.conv1"), cin, cout, 3, stride, false);
        let bn1 = BatchNorm::new(store, &format!("{name}.bn1"), cout);
        let conv2 = Conv::new(store, &format!("{name}.conv2"), cout, cout, 3, 1, false);
        let bn2 = BatchNorm::new(store, &format!("{name}.bn2"), cout);
        let proj = (stride != 1 || cin != cout).then(|| {
            (
                Conv::new(store, &format!("{name}.proj"), cin, cout, 1, stride, false),
                BatchNorm::new(store, &format!("{name}.proj_bn"), cout),
            )
        });
        Self { conv1, bn1, conv2, bn2, proj }
    }

    pub fn forward(&self, cx: &Cx, x: &Var<f32>) -> Result<Var<f32>> {
        let h = self.bn1.forward(cx, &self.conv1.forward(cx, x)?)?.relu();
        let h = self.bn2.forward(cx, &self.conv2.forward(cx, &h)?)?;
        let skip = match &self.proj {
            Some((c, bn)) => bn.forward(cx, &c.forward(cx, x)?)?,
            None => x.clone(),
        };
        Ok(h.add(&skip)?.relu())
    }
}
