//! Per-channel batch normalization over N×H×W.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const DEFAULT_EPS: f64 = 1e-5;
/// Weight kept on the old running statistic at each update.
pub const RUNNING_MOMENTUM: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Moving averages used in [`Mode::Infer`].
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Tensor<T>,
    pub var: Tensor<T>,
}

impl<T: Scalar> RunningStats<T> {
    pub fn new(channels: usize) -> Result<Self> {
        Ok(Self { mean: Tensor::zeros(&[channels])?, var: Tensor::full(&[channels], T::one())? })
    }
}

/// Values saved by the forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct BatchNormSaved<T> {
    pub normalized: Tensor<T>,
    pub inv_std: Vec<T>,
    pub mode: Mode,
}

pub fn batchnorm2d<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running: &mut RunningStats<T>,
    mode: Mode,
    eps: T,
) -> Result<(Tensor<T>, BatchNormSaved<T>)> {
    let (n, c, h, w) = input.dims4()?;
    for (name, t) in [("gamma", gamma), ("beta", beta), ("running mean", &running.mean), ("running var", &running.var)] {
        if t.len() != c {
            return Err(Error::shape(format!("batchnorm {name} has {} channels, input has {c}", t.len())));
        }
    }
    if eps <= T::zero() {
        return Err(Error::invalid("batchnorm eps must be positive"));
    }
    let plane = h * w;
    let m = n * plane;
    let x = input.data();
    let mut normalized = input.zeros_like();
    let mut out = input.zeros_like();
    let mut inv_std = vec![T::zero(); c];
    let momentum = T::lit(RUNNING_MOMENTUM);
    for ch in 0..c {
        let planes = || (0..n).map(move |b| (b * c + ch) * plane);
        let (mean, var) = match mode {
            Mode::Train => {
                let mut sum = T::zero();
                for s in planes() {
                    sum += x[s..s + plane].iter().copied().sum::<T>();
                }
                let mean = sum / T::lit(m as f64);
                let mut sq = T::zero();
                for s in planes() {
                    for &v in &x[s..s + plane] {
                        let d = v - mean;
                        sq += d * d;
                    }
                }
                let var = sq / T::lit(m as f64);
                let unbiased = if m > 1 { sq / T::lit((m - 1) as f64) } else { var };
                let rm = &mut running.mean.data_mut()[ch];
                *rm = momentum * *rm + (T::one() - momentum) * mean;
                let rv = &mut running.var.data_mut()[ch];
                *rv = momentum * *rv + (T::one() - momentum) * unbiased;
                (mean, var)
            }
            Mode::Infer => (running.mean.data()[ch], running.var.data()[ch]),
        };
        let is = T::one() / (var + eps).sqrt();
        inv_std[ch] = is;
        let (g, bt) = (gamma.data()[ch], beta.data()[ch]);
        for s in planes() {
            for i in s..s + plane {
                let xh = (x[i] - mean) * is;
                normalized.data_mut()[i] = xh;
                out.data_mut()[i] = g * xh + bt;
            }
        }
    }
    Ok((out, BatchNormSaved { normalized, inv_std, mode }))
}

pub struct BatchNormGrads<T> {
    pub input: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

pub fn batchnorm2d_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    gamma: &Tensor<T>,
    saved: &BatchNormSaved<T>,
) -> Result<BatchNormGrads<T>> {
    let (n, c, h, w) = grad_out.dims4()?;
    let plane = h * w;
    let m = T::lit((n * plane) as f64);
    let dy = grad_out.data();
    let xh = saved.normalized.data();
    let mut dx = grad_out.zeros_like();
    let mut d_gamma = Tensor::zeros(&[c])?;
    let mut d_beta = Tensor::zeros(&[c])?;
    for ch in 0..c {
        let starts: Vec<usize> = (0..n).map(|b| (b * c + ch) * plane).collect();
        let (mut sum_dy, mut sum_dy_xh) = (T::zero(), T::zero());
        for &s in &starts {
            for i in s..s + plane {
                sum_dy += dy[i];
                sum_dy_xh += dy[i] * xh[i];
            }
        }
        d_gamma.data_mut()[ch] = sum_dy_xh;
        d_beta.data_mut()[ch] = sum_dy;
        let scale = gamma.data()[ch] * saved.inv_std[ch];
        for &s in &starts {
            for i in s..s + plane {
                dx.data_mut()[i] = match saved.mode {
                    Mode::Train => scale * (dy[i] - sum_dy / m - xh[i] * sum_dy_xh / m),
                    Mode::Infer => scale * dy[i],
                };
            }
        }
    }
    Ok(BatchNormGrads { input: dx, gamma: d_gamma, beta: d_beta })
}
