//! Training objectives.

use crate::error::{Error, Result};
use crate::ops::activation::{sigmoid_scalar, softmax};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Negative log-likelihood of binary labels under per-pixel logistic
/// probabilities, summed over every pixel of every batch item.
///
/// Uses `max(f,0) − f·y + ln(1 + e^{−|f|})`, which equals
/// `−[y·ln σ(f) + (1−y)·ln(1−σ(f))]` without overflow. The terms are
/// accumulated with compensated summation so the total stays accurate to a
/// few ulps however many pixels contribute.
pub fn sigmoid_bce_loss<T: Scalar>(scores: &Tensor<T>, labels: &Tensor<T>) -> Result<T> {
    check_bce(scores, labels)?;
    Ok(compensated_sum(
        scores.data().iter().zip(labels.data()).map(|(&f, &y)| f.max(T::zero()) - f * y + (-f.abs()).exp().ln_1p()),
    ))
}

/// Neumaier summation.
pub fn compensated_sum<T: Scalar>(values: impl IntoIterator<Item = T>) -> T {
    let (mut sum, mut comp) = (T::zero(), T::zero());
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// `∂loss/∂f = σ(f) − y`, scaled by the upstream gradient.
pub fn sigmoid_bce_backward<T: Scalar>(scores: &Tensor<T>, labels: &Tensor<T>, upstream: T) -> Tensor<T> {
    let mut g = scores.zeros_like();
    for ((d, &f), &y) in g.data_mut().iter_mut().zip(scores.data()).zip(labels.data()) {
        *d = upstream * (sigmoid_scalar(f) - y);
    }
    g
}

fn check_bce<T: Scalar>(scores: &Tensor<T>, labels: &Tensor<T>) -> Result<()> {
    if scores.shape() != labels.shape() {
        return Err(Error::shape(format!(
            "score map {:?} and label map {:?} differ in shape",
            scores.shape(),
            labels.shape()
        )));
    }
    if let Some(i) = labels.data().iter().position(|&y| y != T::zero() && y != T::one()) {
        return Err(Error::invalid(format!("label map value {} at element {i} is not 0 or 1", labels.data()[i])));
    }
    Ok(())
}

/// Mean over the batch of `−ln softmax(logits)[label]`.
pub fn softmax_ce_loss<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<T> {
    let (n, k) = check_ce(logits, labels)?;
    let mut total = T::zero();
    for (row, &label) in logits.data().chunks(k).zip(labels) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        total += lse - row[label];
    }
    Ok(total / T::lit(n as f64))
}

pub fn softmax_ce_backward<T: Scalar>(logits: &Tensor<T>, labels: &[usize], upstream: T) -> Result<Tensor<T>> {
    let (n, k) = check_ce(logits, labels)?;
    let mut g = softmax(logits)?;
    let scale = upstream / T::lit(n as f64);
    for (row, &label) in g.data_mut().chunks_mut(k).zip(labels) {
        row[label] -= T::one();
        for v in row.iter_mut() {
            *v *= scale;
        }
    }
    Ok(g)
}

fn check_ce<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<(usize, usize)> {
    let (n, k) = logits.dims2()?;
    if labels.len() != n {
        return Err(Error::shape(format!("{} labels supplied for a batch of {n}", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::invalid(format!("label {bad} out of range for {k} classes")));
    }
    Ok((n, k))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn bce_midpoint_and_asymptote() {
        let l = sigmoid_bce_loss(&t(&[1], &[0.0]), &t(&[1], &[1.0])).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        let l = sigmoid_bce_loss(&t(&[1], &[50.0]), &t(&[1], &[1.0])).unwrap();
        assert!(l < 1e-9);
        let l = sigmoid_bce_loss(&t(&[1], &[-800.0]), &t(&[1], &[1.0])).unwrap();
        assert!((l - 800.0).abs() < 1e-9);
    }

    #[test]
    fn bce_rejects_non_binary_labels() {
        assert!(sigmoid_bce_loss(&t(&[2], &[0.0, 0.0]), &t(&[2], &[1.0, 0.5])).is_err());
        assert!(sigmoid_bce_loss(&t(&[2], &[0.0, 0.0]), &t(&[1], &[1.0])).is_err());
    }

    #[test]
    fn ce_cases() {
        let uniform = Tensor::<f64>::zeros(&[1, 8]).unwrap();
        assert!((softmax_ce_loss(&uniform, &[3]).unwrap() - 8f64.ln()).abs() < 1e-12);
        let dominant = t(&[1, 3], &[50.0, 0.0, 0.0]);
        assert!(softmax_ce_loss(&dominant, &[0]).unwrap() < 1e-9);
        let a = softmax_ce_loss(&t(&[1, 2], &[1.0, 0.0]), &[0]).unwrap();
        let b = softmax_ce_loss(&t(&[1, 2], &[0.0, 3.0]), &[0]).unwrap();
        let both = softmax_ce_loss(&t(&[2, 2], &[1.0, 0.0, 0.0, 3.0]), &[0, 0]).unwrap();
        assert!((both - (a + b) / 2.0).abs() < 1e-15);
        assert!(softmax_ce_loss(&uniform, &[8]).is_err());
    }
}
