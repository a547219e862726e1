//! Reverse-mode automatic differentiation over tensors.
//!
//! A [`Tape`] records every primitive executed during a forward pass, in
//! order, together with whatever the primitive needs to compute its
//! vector-Jacobian product (pooling argmax positions, batch-norm inverse
//! standard deviations, ...). [`Tape::backward`] replays the record in
//! reverse, visiting each operation once and accumulating gradients additively
//! where a value fans out to several consumers.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::ops::{self, activation, channels, conv, linear, loss, norm, pool};
use crate::ops::{Mode, PoolIndices, RunningStats};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv2d { input: Var, weight: Var, bias: Option<Var>, stride: usize, pad: usize },
    ConvTranspose2d { input: Var, weight: Var, stride: usize, pad: usize },
    MaxPool { input: Var, indices: Arc<PoolIndices> },
    MaxUnpool { input: Var, indices: Arc<PoolIndices> },
    BatchNorm { input: Var, gamma: Var, beta: Var, saved: norm::BatchNormSaved<T> },
    Relu { input: Var },
    Sigmoid { input: Var },
    Softmax { input: Var },
    Concat { inputs: Vec<Var> },
    SliceChannels { input: Var, start: usize },
    Reshape { input: Var },
    InnerProduct { input: Var, weight: Var, bias: Option<Var> },
    SigmoidBce { scores: Var, labels: Tensor<T> },
    SoftmaxCe { logits: Var, labels: Vec<usize> },
    Sum { input: Var },
    Scale { input: Var, factor: T },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv2d { .. } => "conv2d",
            Op::ConvTranspose2d { .. } => "conv_transpose2d",
            Op::MaxPool { .. } => "maxpool2d",
            Op::MaxUnpool { .. } => "max_unpool2d",
            Op::BatchNorm { .. } => "batchnorm2d",
            Op::Relu { .. } => "relu",
            Op::Sigmoid { .. } => "sigmoid",
            Op::Softmax { .. } => "softmax",
            Op::Concat { .. } => "concat_channels",
            Op::SliceChannels { .. } => "slice_channels",
            Op::Reshape { .. } => "reshape",
            Op::InnerProduct { .. } => "inner_product",
            Op::SigmoidBce { .. } => "sigmoid_bce_loss",
            Op::SoftmaxCe { .. } => "softmax_ce_loss",
            Op::Sum { .. } => "sum",
            Op::Scale { .. } => "scale",
            Op::Add { .. } => "add",
            Op::Mul { .. } => "mul",
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::Conv2d { input, weight, bias, .. } | Op::InnerProduct { input, weight, bias } => {
                let mut v = vec![*input, *weight];
                v.extend(bias);
                v
            }
            Op::ConvTranspose2d { input, weight, .. } => vec![*input, *weight],
            Op::BatchNorm { input, gamma, beta, .. } => vec![*input, *gamma, *beta],
            Op::MaxPool { input, .. }
            | Op::MaxUnpool { input, .. }
            | Op::Relu { input }
            | Op::Sigmoid { input }
            | Op::Softmax { input }
            | Op::SliceChannels { input, .. }
            | Op::Reshape { input }
            | Op::Sum { input }
            | Op::Scale { input, .. } => vec![*input],
            Op::Concat { inputs } => inputs.clone(),
            Op::SigmoidBce { scores, .. } => vec![*scores],
            Op::SoftmaxCe { logits, .. } => vec![*logits],
            Op::Add { a, b } | Op::Mul { a, b } => vec![*a, *b],
        }
    }
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    grad: Option<Tensor<T>>,
}

/// Ordered record of executed operations.
#[derive(Debug)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    /// Number of recorded values, leaves included.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records an input tensor.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Result<Var> {
        value.check_finite("leaf")?;
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad, grad: None });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Result<Var> {
        self.leaf(value, false)
    }

    pub fn param(&mut self, value: Tensor<T>) -> Result<Var> {
        self.leaf(value, true)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Gradient populated by the last [`Tape::backward`], if `v` was reachable.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor<T>> {
        self.nodes[v.0].grad.take()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Names of the recorded operations in execution order (leaves excluded).
    pub fn op_names(&self) -> Vec<&'static str> {
        self.nodes.iter().filter(|n| !matches!(n.op, Op::Leaf)).map(|n| n.op.name()).collect()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Result<Var> {
        value.check_finite(op.name())?;
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad, grad: None });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let y = conv::conv2d(self.value(input), self.value(weight), bias.map(|b| self.value(b)), stride, pad)?;
        self.push(y, Op::Conv2d { input, weight, bias, stride, pad })
    }

    pub fn conv_transpose2d(&mut self, input: Var, weight: Var, stride: usize, pad: usize) -> Result<Var> {
        let y = conv::conv_transpose2d(self.value(input), self.value(weight), stride, pad)?;
        self.push(y, Op::ConvTranspose2d { input, weight, stride, pad })
    }

    pub fn maxpool2d(&mut self, input: Var, kernel: usize, stride: usize, ceil_mode: bool) -> Result<(Var, Arc<PoolIndices>)> {
        let (y, idx) = pool::maxpool2d(self.value(input), kernel, stride, ceil_mode)?;
        let indices = Arc::new(idx);
        let v = self.push(y, Op::MaxPool { input, indices: Arc::clone(&indices) })?;
        Ok((v, indices))
    }

    pub fn max_unpool2d(&mut self, input: Var, indices: &Arc<PoolIndices>, out_hw: (usize, usize)) -> Result<Var> {
        let y = pool::max_unpool2d(self.value(input), indices, out_hw)?;
        self.push(y, Op::MaxUnpool { input, indices: Arc::clone(indices) })
    }

    pub fn batchnorm2d(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        running: &mut RunningStats<T>,
        mode: Mode,
        eps: T,
    ) -> Result<Var> {
        let (y, saved) = norm::batchnorm2d(self.value(input), self.value(gamma), self.value(beta), running, mode, eps)?;
        self.push(y, Op::BatchNorm { input, gamma, beta, saved })
    }

    pub fn relu(&mut self, input: Var) -> Result<Var> {
        let y = activation::relu(self.value(input));
        self.push(y, Op::Relu { input })
    }

    pub fn sigmoid(&mut self, input: Var) -> Result<Var> {
        let y = activation::sigmoid(self.value(input));
        self.push(y, Op::Sigmoid { input })
    }

    pub fn softmax(&mut self, input: Var) -> Result<Var> {
        let y = activation::softmax(self.value(input))?;
        self.push(y, Op::Softmax { input })
    }

    pub fn concat_channels(&mut self, inputs: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor<T>> = inputs.iter().map(|&v| self.value(v)).collect();
        let y = channels::concat_channels(&values)?;
        self.push(y, Op::Concat { inputs: inputs.to_vec() })
    }

    pub fn slice_channels(&mut self, input: Var, start: usize, count: usize) -> Result<Var> {
        let y = channels::slice_channels(self.value(input), start, count)?;
        self.push(y, Op::SliceChannels { input, start })
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var> {
        let y = self.value(input).clone().reshape(shape)?;
        self.push(y, Op::Reshape { input })
    }

    /// Collapses every axis after the first.
    pub fn flatten(&mut self, input: Var) -> Result<Var> {
        let shape = self.value(input).shape();
        let n = shape[0];
        let d = shape[1..].iter().product();
        self.reshape(input, &[n, d])
    }

    pub fn inner_product(&mut self, input: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let y = linear::inner_product(self.value(input), self.value(weight), bias.map(|b| self.value(b)))?;
        self.push(y, Op::InnerProduct { input, weight, bias })
    }

    pub fn sigmoid_bce_loss(&mut self, scores: Var, labels: &Tensor<T>) -> Result<Var> {
        let l = loss::sigmoid_bce_loss(self.value(scores), labels)?;
        self.push(Tensor::scalar(l), Op::SigmoidBce { scores, labels: labels.clone() })
    }

    pub fn softmax_ce_loss(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let l = loss::softmax_ce_loss(self.value(logits), labels)?;
        self.push(Tensor::scalar(l), Op::SoftmaxCe { logits, labels: labels.to_vec() })
    }

    pub fn sum(&mut self, input: Var) -> Result<Var> {
        let s = self.value(input).sum();
        self.push(Tensor::scalar(s), Op::Sum { input })
    }

    pub fn scale(&mut self, input: Var, factor: T) -> Result<Var> {
        let y = self.value(input).map(|v| v * factor);
        self.push(y, Op::Scale { input, factor })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.zip(a, b, "add", |x, y| x + y)?;
        self.push(y, Op::Add { a, b })
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.zip(a, b, "mul", |x, y| x * y)?;
        self.push(y, Op::Mul { a, b })
    }

    fn zip(&self, a: Var, b: Var, what: &str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::Shape(format!("{what}: shapes {:?} and {:?} differ", ta.shape(), tb.shape())));
        }
        Tensor::from_vec(ta.shape(), ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect())
    }

    /// Propagates gradients from a scalar `output` back through the tape.
    ///
    /// Afterwards every `requires_grad` value that `output` depends on holds
    /// its gradient. Gradients from an earlier call are discarded.
    pub fn backward(&mut self, output: Var) -> Result<()> {
        let out = &self.nodes[output.0].value;
        if !out.is_scalar() {
            return Err(Error::NotScalar(out.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Tensor::from_vec(out.shape(), vec![T::one()])?);

        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let (lower, upper) = grads.split_at_mut(i);
            let Some(g) = upper[0].as_ref() else { continue };
            for (v, dv) in self.vjp(node, g)? {
                if !self.nodes[v.0].requires_grad {
                    continue;
                }
                match &mut lower[v.0] {
                    Some(acc) => {
                        for (a, d) in acc.data_mut().iter_mut().zip(dv.data()) {
                            *a += *d;
                        }
                    }
                    slot @ None => *slot = Some(dv),
                }
            }
        }
        for (node, g) in self.nodes.iter_mut().zip(grads) {
            node.grad = if node.requires_grad { g } else { None };
        }
        Ok(())
    }

    /// Vector-Jacobian product of one node: its gradient pushed to each input.
    fn vjp(&self, node: &Node<T>, g: &Tensor<T>) -> Result<Vec<(Var, Tensor<T>)>> {
        let val = |v: Var| self.value(v);
        Ok(match &node.op {
            Op::Leaf => vec![],
            Op::Conv2d { input, weight, bias, stride, pad } => {
                let gr = conv::conv2d_backward(val(*input), val(*weight), g, *stride, *pad)?;
                let mut out = vec![(*input, gr.input), (*weight, gr.weight)];
                if let Some(b) = bias {
                    out.push((*b, gr.bias));
                }
                out
            }
            Op::ConvTranspose2d { input, weight, stride, pad } => {
                let gr = conv::conv_transpose2d_backward(val(*input), val(*weight), g, *stride, *pad)?;
                vec![(*input, gr.input), (*weight, gr.weight)]
            }
            Op::MaxPool { input, indices } => vec![(*input, pool::maxpool2d_backward(g, indices)?)],
            Op::MaxUnpool { input, indices } => vec![(*input, pool::max_unpool2d_backward(g, indices)?)],
            Op::BatchNorm { input, gamma, beta, saved } => {
                let gr = norm::batchnorm2d_backward(g, val(*gamma), saved)?;
                vec![(*input, gr.input), (*gamma, gr.gamma), (*beta, gr.beta)]
            }
            Op::Relu { input } => {
                let x = val(*input);
                let d = zip_map(g, x, |gv, xv| if xv > T::zero() { gv } else { T::zero() });
                vec![(*input, d)]
            }
            Op::Sigmoid { input } => {
                let d = zip_map(g, &node.value, |gv, s| gv * s * (T::one() - s));
                vec![(*input, d)]
            }
            Op::Softmax { input } => {
                let k = node.value.shape()[1];
                let mut d = g.zeros_like();
                for ((drow, grow), srow) in d.data_mut().chunks_mut(k).zip(g.data().chunks(k)).zip(node.value.data().chunks(k)) {
                    let dot: T = grow.iter().zip(srow).map(|(&a, &b)| a * b).sum();
                    for ((dv, &gv), &sv) in drow.iter_mut().zip(grow).zip(srow) {
                        *dv = sv * (gv - dot);
                    }
                }
                vec![(*input, d)]
            }
            Op::Concat { inputs } => {
                let mut start = 0;
                let mut out = Vec::with_capacity(inputs.len());
                for &v in inputs {
                    let c = val(v).shape()[1];
                    out.push((v, ops::slice_channels(g, start, c)?));
                    start += c;
                }
                out
            }
            Op::SliceChannels { input, start } => {
                let x = val(*input);
                let (n, c, h, w) = x.dims4()?;
                let count = g.shape()[1];
                let plane = h * w;
                let mut d = x.zeros_like();
                for b in 0..n {
                    let dst = (b * c + start) * plane;
                    let src = b * count * plane;
                    d.data_mut()[dst..dst + count * plane].copy_from_slice(&g.data()[src..src + count * plane]);
                }
                vec![(*input, d)]
            }
            Op::Reshape { input } => vec![(*input, g.clone().reshape(val(*input).shape())?)],
            Op::InnerProduct { input, weight, bias } => {
                let gr = linear::inner_product_backward(val(*input), val(*weight), g)?;
                let mut out = vec![(*input, gr.input), (*weight, gr.weight)];
                if let Some(b) = bias {
                    out.push((*b, gr.bias));
                }
                out
            }
            Op::SigmoidBce { scores, labels } => {
                vec![(*scores, loss::sigmoid_bce_backward(val(*scores), labels, g.item()?))]
            }
            Op::SoftmaxCe { logits, labels } => {
                vec![(*logits, loss::softmax_ce_backward(val(*logits), labels, g.item()?)?)]
            }
            Op::Sum { input } => {
                let gv = g.item()?;
                vec![(*input, val(*input).map(|_| gv))]
            }
            Op::Scale { input, factor } => vec![(*input, g.map(|v| v * *factor))],
            Op::Add { a, b } => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Mul { a, b } => vec![
                (*a, zip_map(g, val(*b), |gv, bv| gv * bv)),
                (*b, zip_map(g, val(*a), |gv, av| gv * av)),
            ],
        })
    }
}

fn zip_map<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let mut out = a.clone();
    for (o, &bv) in out.data_mut().iter_mut().zip(b.data()) {
        *o = f(*o, bv);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec1(data: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(&[data.len()], data.to_vec()).unwrap()
    }

    #[test]
    fn linear_scalar() {
        let mut tape = Tape::new();
        let x = tape.param(vec1(&[2.0])).unwrap();
        let y = tape.scale(x, 3.0).unwrap();
        tape.backward(y).unwrap();
        assert_eq!(tape.value(y).data(), &[6.0]);
        assert_eq!(tape.grad(x).unwrap().data(), &[3.0]);
    }

    #[test]
    fn sigmoid_closed_form() {
        let xs = [-2.0, -0.3, 0.0, 1.7];
        let mut tape = Tape::new();
        let x = tape.param(vec1(&xs)).unwrap();
        let s = tape.sigmoid(x).unwrap();
        let y = tape.sum(s).unwrap();
        tape.backward(y).unwrap();
        for (g, &x) in tape.grad(x).unwrap().data().iter().zip(&xs) {
            let s = 1.0 / (1.0 + f64::exp(-x));
            assert!((g - s * (1.0 - s)).abs() < 1e-15);
        }
    }

    #[test]
    fn fan_out_accumulates() {
        // y = sum(x·x + x) → dy/dx = 2x + 1
        let mut tape = Tape::new();
        let x = tape.param(vec1(&[1.5, -2.0])).unwrap();
        let sq = tape.mul(x, x).unwrap();
        let z = tape.add(sq, x).unwrap();
        let y = tape.sum(z).unwrap();
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[4.0, -3.0]);
    }

    #[test]
    fn backward_requires_scalar() {
        let mut tape = Tape::new();
        let x = tape.param(vec1(&[1.0, 2.0])).unwrap();
        let y = tape.scale(x, 2.0).unwrap();
        assert!(matches!(tape.backward(y), Err(Error::NotScalar(_))));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(vec1(&[1.0])).unwrap();
        let c = tape.constant(vec1(&[5.0])).unwrap();
        let p = tape.mul(x, c).unwrap();
        let y = tape.sum(p).unwrap();
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[5.0]);
        assert!(tape.grad(c).is_none());
    }

    #[test]
    fn non_finite_results_are_errors() {
        let mut tape = Tape::new();
        assert!(tape.leaf(vec1(&[f64::INFINITY]), false).is_err());
        let x = tape.param(vec1(&[f64::MAX])).unwrap();
        assert!(matches!(tape.scale(x, 10.0), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn records_operations_in_order() {
        let mut tape = Tape::new();
        let x = tape.param(vec1(&[1.0])).unwrap();
        let r = tape.relu(x).unwrap();
        let _ = tape.sum(r).unwrap();
        assert_eq!(tape.op_names(), vec!["relu", "sum"]);
    }
}
