use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Concatenates N×Cᵢ×H×W tensors along the channel axis, preserving input order.
pub fn concat_channels<T: Scalar>(inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = inputs.first().ok_or_else(|| Error::invalid("concat_channels needs at least one input"))?;
    let (n, _, h, w) = first.dims4()?;
    let mut total = 0;
    for (i, t) in inputs.iter().enumerate() {
        let (tn, tc, th, tw) = t.dims4()?;
        if (tn, th, tw) != (n, h, w) {
            return Err(Error::shape(format!(
                "concat input {i} has shape {:?}, expected batch {n} and spatial {h}×{w}",
                t.shape()
            )));
        }
        total += tc;
    }
    let plane = h * w;
    let mut data = Vec::with_capacity(n * total * plane);
    for b in 0..n {
        for t in inputs {
            let c = t.shape()[1];
            data.extend_from_slice(&t.data()[b * c * plane..(b + 1) * c * plane]);
        }
    }
    Tensor::from_vec(&[n, total, h, w], data)
}

/// Channels `[start, start + count)` of an N×C×H×W tensor.
pub fn slice_channels<T: Scalar>(x: &Tensor<T>, start: usize, count: usize) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4()?;
    if count == 0 || start + count > c {
        return Err(Error::shape(format!("channel range {start}..{} out of bounds for {c} channels", start + count)));
    }
    let plane = h * w;
    let mut data = Vec::with_capacity(n * count * plane);
    for b in 0..n {
        let s = (b * c + start) * plane;
        data.extend_from_slice(&x.data()[s..s + count * plane]);
    }
    Tensor::from_vec(&[n, count, h, w], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_input_lands_in_channel_zero() {
        let a = Tensor::<f64>::full(&[1, 1, 2, 2], 1.0).unwrap();
        let b = Tensor::<f64>::full(&[1, 1, 2, 2], 2.0).unwrap();
        let y = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2, 2]);
        assert_eq!(y.data(), &[1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn spatial_mismatch_names_input() {
        let a = Tensor::<f64>::zeros(&[1, 1, 2, 2]).unwrap();
        let b = Tensor::<f64>::zeros(&[1, 1, 2, 3]).unwrap();
        let err = concat_channels(&[&a, &a, &b]).unwrap_err().to_string();
        assert!(err.contains("input 2"), "{err}");
    }

    #[test]
    fn concat_then_slice_round_trip() {
        let a = Tensor::<f64>::from_fn(&[2, 3, 2, 1], |i| i as f64 * 0.1).unwrap();
        let b = Tensor::<f64>::from_fn(&[2, 1, 2, 1], |i| -(i as f64)).unwrap();
        let y = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(slice_channels(&y, 0, 3).unwrap(), a);
        assert_eq!(slice_channels(&y, 3, 1).unwrap(), b);
    }
}
