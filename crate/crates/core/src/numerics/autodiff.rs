//! Reverse-mode differentiation over a per-pass graph.
//!
//! A [`Var`] is a node holding its forward value and, when any input requires
//! a gradient, the operation that produced it. Graphs are built eagerly during
//! the forward pass and walked once in reverse by [`Var::backward`]. Nodes
//! whose inputs are all constants record nothing, so inference graphs free
//! their intermediates as soon as they go out of scope.

use std::collections::HashMap;
use std::rc::Rc;

use super::act::Activation;
use super::conv;
use super::loss::{self, FrpLossConfig};
use super::norm::{self, BatchStats};
use super::pool;
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

pub struct Var<T: Scalar>(Rc<Node<T>>);

struct Node<T: Scalar> {
    value: Tensor<T>,
    requires_grad: bool,
    op: Option<Op<T>>,
}

impl<T: Scalar> Clone for Var<T> {
    fn clone(&self) -> Self {
        Var(Rc::clone(&self.0))
    }
}

impl<T: Scalar> std::fmt::Debug for Var<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("shape", &self.0.value.shape())
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

enum Op<T: Scalar> {
    Conv2d { x: Var<T>, w: Var<T>, stride: usize, pad: usize },
    ConvTranspose2d { x: Var<T>, w: Var<T>, stride: usize },
    ChannelBias { x: Var<T>, b: Var<T> },
    BatchNormTrain { gamma: Var<T>, beta: Var<T>, x: Var<T>, xhat: Tensor<T>, inv_std: Vec<T> },
    BatchNormEval { x: Var<T>, gamma: Var<T>, beta: Var<T>, mean: Vec<T>, inv_std: Vec<T> },
    MaxPool { x: Var<T>, argmax: Vec<u32> },
    Act { x: Var<T>, kind: Activation },
    Add { a: Var<T>, b: Var<T> },
    Scale { x: Var<T>, s: T },
    ConcatChannels { parts: Vec<Var<T>> },
    GlobalAvgPool { x: Var<T> },
    Reshape { x: Var<T> },
    Linear { x: Var<T>, w: Var<T>, b: Var<T> },
    CrossEntropy { logits: Var<T>, probs: Tensor<T>, targets: Vec<usize> },
    FrpLoss { pred: Var<T>, target: Tensor<T>, fire: Vec<bool>, cfg: FrpLossConfig },
    WeightedSum { x: Var<T>, weights: Tensor<T> },
}

impl<T: Scalar> Op<T> {
    fn parents(&self) -> Vec<&Var<T>> {
        match self {
            Op::Conv2d { x, w, .. } | Op::ConvTranspose2d { x, w, .. } => vec![x, w],
            Op::ChannelBias { x, b } => vec![x, b],
            Op::BatchNormTrain { x, gamma, beta, .. } | Op::BatchNormEval { x, gamma, beta, .. } => {
                vec![x, gamma, beta]
            }
            Op::MaxPool { x, .. }
            | Op::Act { x, .. }
            | Op::Scale { x, .. }
            | Op::GlobalAvgPool { x }
            | Op::Reshape { x }
            | Op::WeightedSum { x, .. } => vec![x],
            Op::Add { a, b } => vec![a, b],
            Op::ConcatChannels { parts } => parts.iter().collect(),
            Op::Linear { x, w, b } => vec![x, w, b],
            Op::CrossEntropy { logits, .. } => vec![logits],
            Op::FrpLoss { pred, .. } => vec![pred],
        }
    }

    /// Gradients for each parent in [`Op::parents`] order (`None` when the
    /// parent does not require one).
    fn backward(&self, out: &Tensor<T>, g: &Tensor<T>) -> Result<Vec<Option<Tensor<T>>>> {
        let need = |v: &Var<T>| v.requires_grad();
        Ok(match self {
            Op::Conv2d { x, w, stride, pad } => {
                let (dx, dw) = conv::conv2d_backward(x.value(), w.value(), *stride, *pad, g, need(x), need(w))?;
                vec![dx, dw]
            }
            Op::ConvTranspose2d { x, w, stride } => {
                let (dx, dw) = conv::conv_transpose2d_backward(x.value(), w.value(), *stride, g, need(x), need(w))?;
                vec![dx, dw]
            }
            Op::ChannelBias { x, b } => {
                let c = b.value().len();
                let inner: usize = x.value().shape()[2..].iter().product();
                let mut db = vec![T::ZERO; c];
                for (i, chunk) in g.data().chunks_exact(inner).enumerate() {
                    let mut acc = T::ZERO;
                    for &v in chunk {
                        acc += v;
                    }
                    db[i % c] += acc;
                }
                vec![Some(g.clone()), Some(Tensor::from_parts(vec![c], db))]
            }
            Op::BatchNormTrain { gamma, xhat, inv_std, .. } => {
                let (dx, dg, db) = norm::batchnorm_train_backward(xhat, gamma.value(), inv_std, g);
                vec![Some(dx), Some(dg), Some(db)]
            }
            Op::BatchNormEval { x, gamma, mean, inv_std, .. } => {
                let (dx, dg, db) = norm::batchnorm_eval_backward(x.value(), gamma.value(), mean, inv_std, g);
                vec![Some(dx), Some(dg), Some(db)]
            }
            Op::MaxPool { x, argmax } => vec![Some(pool::maxpool2d_backward(x.value().shape(), argmax, g))],
            Op::Act { x, kind } => vec![Some(kind.backward(x.value(), g))],
            Op::Add { .. } => vec![Some(g.clone()), Some(g.clone())],
            Op::Scale { s, .. } => vec![Some(g.map(|v| v * *s))],
            Op::ConcatChannels { parts } => {
                let n = out.shape()[0];
                let inner: usize = out.shape()[2..].iter().product();
                let total_c = out.shape()[1];
                let mut grads = Vec::with_capacity(parts.len());
                let mut offset = 0;
                for p in parts {
                    let c = p.value().shape()[1];
                    let mut d = Vec::with_capacity(n * c * inner);
                    for s in 0..n {
                        let start = (s * total_c + offset) * inner;
                        d.extend_from_slice(&g.data()[start..start + c * inner]);
                    }
                    grads.push(Some(Tensor::from_parts(p.value().shape().to_vec(), d)));
                    offset += c;
                }
                grads
            }
            Op::GlobalAvgPool { x } => vec![Some(pool::global_avg_pool_backward(x.value().shape(), g))],
            Op::Reshape { x } => vec![Some(g.reshape(x.value().shape().to_vec())?)],
            Op::Linear { x, w, .. } => {
                let [n, fin] = x.value().dims2()?;
                let fout = w.value().shape()[0];
                let dx = need(x).then(|| {
                    let mut d = vec![T::ZERO; n * fin];
                    conv::matmul(n, fout, fin, g.data(), false, w.value().data(), false, &mut d, false);
                    Tensor::from_parts(vec![n, fin], d)
                });
                let mut dw = vec![T::ZERO; fout * fin];
                conv::matmul(fout, n, fin, g.data(), true, x.value().data(), false, &mut dw, false);
                let mut db = vec![T::ZERO; fout];
                for row in g.data().chunks_exact(fout) {
                    for (a, &v) in db.iter_mut().zip(row) {
                        *a += v;
                    }
                }
                vec![
                    dx,
                    Some(Tensor::from_parts(vec![fout, fin], dw)),
                    Some(Tensor::from_parts(vec![fout], db)),
                ]
            }
            Op::CrossEntropy { probs, targets, .. } => {
                vec![Some(loss::softmax_cross_entropy_backward(probs, targets, g.item()))]
            }
            Op::FrpLoss { pred, target, fire, cfg } => {
                vec![Some(loss::frp_loss_backward(pred.value(), target, fire, cfg, g.item()))]
            }
            Op::WeightedSum { weights, .. } => {
                let s = g.item();
                vec![Some(weights.map(|w| w * s))]
            }
        })
    }
}

/// Gradients produced by one backward pass, keyed by graph leaf.
pub struct Gradients<T: Scalar> {
    grads: HashMap<*const Node<T>, (Var<T>, Tensor<T>)>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: &Var<T>) -> Option<&Tensor<T>> {
        self.grads.get(&Rc::as_ptr(&v.0)).map(|(_, t)| t)
    }

    /// Gradient of `v`, or zeros when `v` did not influence the loss.
    pub fn get_or_zeros(&self, v: &Var<T>) -> Tensor<T> {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(v.value().shape().to_vec()))
    }
}

impl<T: Scalar> Var<T> {
    fn from_node(value: Tensor<T>, requires_grad: bool, op: Option<Op<T>>) -> Self {
        Var(Rc::new(Node { value, requires_grad, op }))
    }

    /// A leaf that never receives a gradient (inputs, frozen weights).
    pub fn constant(value: Tensor<T>) -> Self {
        Self::from_node(value, false, None)
    }

    /// A trainable leaf.
    pub fn param(value: Tensor<T>) -> Self {
        Self::from_node(value, true, None)
    }

    fn record(value: Tensor<T>, op: Op<T>) -> Self {
        let rg = op.parents().iter().any(|p| p.requires_grad());
        Self::from_node(value, rg, rg.then_some(op))
    }

    pub fn value(&self) -> &Tensor<T> {
        &self.0.value
    }

    pub fn shape(&self) -> &[usize] {
        self.0.value.shape()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn conv2d(&self, w: &Var<T>, stride: usize, pad: usize) -> Result<Self> {
        let y = conv::conv2d(self.value(), w.value(), stride, pad)?;
        Ok(Self::record(y, Op::Conv2d { x: self.clone(), w: w.clone(), stride, pad }))
    }

    pub fn conv_transpose2d(&self, w: &Var<T>, stride: usize) -> Result<Self> {
        let y = conv::conv_transpose2d(self.value(), w.value(), stride)?;
        Ok(Self::record(y, Op::ConvTranspose2d { x: self.clone(), w: w.clone(), stride }))
    }

    /// Adds a per-channel bias to a `[N, C, ...]` tensor.
    pub fn add_channel_bias(&self, b: &Var<T>) -> Result<Self> {
        let shape = self.shape();
        if shape.len() < 2 || b.value().len() != shape[1] {
            return Err(Error::dim(format!(
                "bias of length {} for tensor {:?}",
                b.value().len(),
                shape
            )));
        }
        let c = shape[1];
        let inner: usize = shape[2..].iter().product();
        let mut y = self.value().clone();
        let bias = b.value().data();
        for (i, chunk) in y.data_mut().chunks_exact_mut(inner).enumerate() {
            let bv = bias[i % c];
            for v in chunk {
                *v += bv;
            }
        }
        Ok(Self::record(y, Op::ChannelBias { x: self.clone(), b: b.clone() }))
    }

    /// Training-mode batch normalization; also returns the batch statistics
    /// so the caller can update its running estimates.
    pub fn batchnorm_train(&self, gamma: &Var<T>, beta: &Var<T>) -> Result<(Self, BatchStats<T>)> {
        let (y, xhat, stats) = norm::batchnorm_train(self.value(), gamma.value(), beta.value())?;
        let op = Op::BatchNormTrain {
            x: self.clone(),
            gamma: gamma.clone(),
            beta: beta.clone(),
            xhat,
            inv_std: stats.inv_std.clone(),
        };
        Ok((Self::record(y, op), stats))
    }

    pub fn batchnorm_eval(&self, gamma: &Var<T>, beta: &Var<T>, mean: &[T], var: &[T]) -> Result<Self> {
        let (y, inv_std) = norm::batchnorm_eval(self.value(), gamma.value(), beta.value(), mean, var)?;
        let op = Op::BatchNormEval {
            x: self.clone(),
            gamma: gamma.clone(),
            beta: beta.clone(),
            mean: mean.to_vec(),
            inv_std,
        };
        Ok(Self::record(y, op))
    }

    pub fn maxpool2d(&self, k: usize, stride: usize) -> Result<Self> {
        let (y, argmax) = pool::maxpool2d(self.value(), k, stride)?;
        Ok(Self::record(y, Op::MaxPool { x: self.clone(), argmax }))
    }

    pub fn activation(&self, kind: Activation) -> Self {
        Self::record(kind.forward(self.value()), Op::Act { x: self.clone(), kind })
    }

    pub fn relu(&self) -> Self {
        self.activation(Activation::Relu)
    }

    pub fn add(&self, other: &Var<T>) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::dim(format!(
                "add: shapes {:?} and {:?} differ",
                self.shape(),
                other.shape()
            )));
        }
        let mut y = self.value().clone();
        y.add_assign(other.value());
        Ok(Self::record(y, Op::Add { a: self.clone(), b: other.clone() }))
    }

    pub fn scale(&self, s: T) -> Self {
        Self::record(self.value().map(|v| v * s), Op::Scale { x: self.clone(), s })
    }

    /// Concatenates `[N, C_i, ...]` tensors along the channel axis.
    pub fn concat_channels(parts: &[Var<T>]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::dim("concat of zero tensors"))?;
        let n = first.shape()[0];
        let tail = &first.shape()[2..];
        let inner: usize = tail.iter().product();
        let mut total_c = 0;
        for p in parts {
            if p.shape().len() < 2 || p.shape()[0] != n || &p.shape()[2..] != tail {
                return Err(Error::dim(format!(
                    "concat: shape {:?} incompatible with {:?}",
                    p.shape(),
                    first.shape()
                )));
            }
            total_c += p.shape()[1];
        }
        let mut data = Vec::with_capacity(n * total_c * inner);
        for s in 0..n {
            for p in parts {
                let c = p.shape()[1];
                data.extend_from_slice(&p.value().data()[s * c * inner..(s + 1) * c * inner]);
            }
        }
        let mut shape = first.shape().to_vec();
        shape[1] = total_c;
        Ok(Self::record(
            Tensor::from_parts(shape, data),
            Op::ConcatChannels { parts: parts.to_vec() },
        ))
    }

    pub fn global_avg_pool(&self) -> Result<Self> {
        let y = pool::global_avg_pool(self.value())?;
        Ok(Self::record(y, Op::GlobalAvgPool { x: self.clone() }))
    }

    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        let y = self.value().reshape(shape)?;
        Ok(Self::record(y, Op::Reshape { x: self.clone() }))
    }

    /// `[N, in] · Wᵀ + b` with `W: [out, in]`, `b: [out]`.
    pub fn linear(&self, w: &Var<T>, b: &Var<T>) -> Result<Self> {
        let [n, fin] = self.value().dims2()?;
        let [fout, win] = w.value().dims2()?;
        if win != fin || b.value().len() != fout {
            return Err(Error::dim(format!(
                "linear: input [{n}, {fin}] with weight {:?} and bias {:?}",
                w.shape(),
                b.shape()
            )));
        }
        let mut y = vec![T::ZERO; n * fout];
        for row in y.chunks_exact_mut(fout) {
            row.copy_from_slice(b.value().data());
        }
        conv::matmul(n, fin, fout, self.value().data(), false, w.value().data(), true, &mut y, true);
        Ok(Self::record(
            Tensor::from_parts(vec![n, fout], y),
            Op::Linear { x: self.clone(), w: w.clone(), b: b.clone() },
        ))
    }

    /// Mean softmax cross-entropy over class axis 1 (any trailing spatial axes).
    pub fn cross_entropy(&self, targets: &[usize]) -> Result<Self> {
        let (l, probs) = loss::softmax_cross_entropy(self.value(), targets)?;
        Ok(Self::record(
            Tensor::scalar(l),
            Op::CrossEntropy { logits: self.clone(), probs, targets: targets.to_vec() },
        ))
    }

    pub fn frp_loss(&self, target: &Tensor<T>, fire: &[bool], cfg: &FrpLossConfig) -> Result<Self> {
        let l = loss::frp_loss(self.value(), target, fire, cfg)?;
        Ok(Self::record(
            Tensor::scalar(l),
            Op::FrpLoss { pred: self.clone(), target: target.clone(), fire: fire.to_vec(), cfg: *cfg },
        ))
    }

    /// `Σ xᵢ·wᵢ` for a fixed weight tensor of the same shape.
    pub fn weighted_sum(&self, weights: &Tensor<T>) -> Result<Self> {
        if weights.shape() != self.shape() {
            return Err(Error::dim("weighted_sum: weight shape differs"));
        }
        let s = self.value().dot(weights);
        Ok(Self::record(
            Tensor::scalar(s),
            Op::WeightedSum { x: self.clone(), weights: weights.clone() },
        ))
    }

    pub fn sum(&self) -> Result<Self> {
        self.weighted_sum(&Tensor::full(self.shape().to_vec(), T::ONE))
    }

    /// Back-propagates from this scalar. Returns gradients for every leaf
    /// that requires one.
    pub fn backward(&self) -> Result<Gradients<T>> {
        if self.value().len() != 1 {
            return Err(Error::dim(format!(
                "backward from non-scalar of shape {:?}",
                self.shape()
            )));
        }
        let order = self.topo_order();
        let mut pending: HashMap<*const Node<T>, Tensor<T>> = HashMap::new();
        pending.insert(Rc::as_ptr(&self.0), Tensor::full(self.shape().to_vec(), T::ONE));
        let mut leaves = HashMap::new();
        for var in order.iter().rev() {
            let key = Rc::as_ptr(&var.0);
            let Some(g) = pending.remove(&key) else { continue };
            match &var.0.op {
                None => {
                    leaves.insert(key, (var.clone(), g));
                }
                Some(op) => {
                    let grads = op.backward(&var.0.value, &g)?;
                    for (parent, pg) in op.parents().into_iter().zip(grads) {
                        let Some(pg) = pg else { continue };
                        if !parent.requires_grad() {
                            continue;
                        }
                        match pending.entry(Rc::as_ptr(&parent.0)) {
                            std::collections::hash_map::Entry::Occupied(mut e) => e.get_mut().add_assign(&pg),
                            std::collections::hash_map::Entry::Vacant(e) => {
                                e.insert(pg);
                            }
                        }
                    }
                }
            }
        }
        Ok(Gradients { grads: leaves })
    }

    /// Post-order over nodes that require gradients, iterative DFS.
    fn topo_order(&self) -> Vec<Var<T>> {
        let mut order = Vec::new();
        if !self.requires_grad() {
            return order;
        }
        let mut seen = std::collections::HashSet::new();
        let mut stack: Vec<(Var<T>, bool)> = vec![(self.clone(), false)];
        while let Some((v, expanded)) = stack.pop() {
            if expanded {
                order.push(v);
                continue;
            }
            if !seen.insert(Rc::as_ptr(&v.0)) {
                continue;
            }
            stack.push((v.clone(), true));
            if let Some(op) = &v.0.op {
                for p in op.parents().into_iter().rev() {
                    if p.requires_grad() && !seen.contains(&Rc::as_ptr(&p.0)) {
                        stack.push((p.clone(), false));
                    }
                }
            }
        }
        order
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_record_no_graph() {
        let x = Var::constant(Tensor::<f64>::full([2], 1.0));
        let y = x.relu().scale(2.0);
        assert!(!y.requires_grad());
        assert!(y.0.op.is_none());
    }

    #[test]
    fn shared_subexpression_accumulates() {
        // y = sum(x + x) -> dy/dx = 2
        let x = Var::param(Tensor::<f64>::full([3], 0.5));
        let y = x.add(&x).unwrap().sum().unwrap();
        let g = y.backward().unwrap();
        assert_eq!(g.get(&x).unwrap().data(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn backward_requires_scalar() {
        let x = Var::param(Tensor::<f64>::full([3], 0.5));
        assert!(x.relu().backward().is_err());
    }
}
