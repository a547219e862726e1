//! Parameter initializers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Number of inputs feeding each output unit: `C_in·k·k` for a convolution
/// weight, `D` for an inner-product weight.
pub fn fan_in(shape: &[usize]) -> Result<usize> {
    if shape.len() < 2 {
        return Err(Error::invalid(format!("msra init needs a weight of rank ≥ 2, got {shape:?}")));
    }
    let f: usize = shape[1..].iter().product();
    if f == 0 {
        return Err(Error::invalid(format!("weight {shape:?} has zero fan-in")));
    }
    Ok(f)
}

/// Draws i.i.d. `Normal(0, sqrt(2 / fan_in))` values.
pub fn msra_init<T: Scalar, R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Result<Tensor<T>> {
    let std = (2.0 / fan_in(shape)? as f64).sqrt();
    let normal = Normal::new(0.0, std).map_err(|e| Error::invalid(e.to_string()))?;
    Tensor::from_fn(shape, |_| T::lit(normal.sample(rng)))
}

pub fn msra_init_seeded<T: Scalar>(shape: &[usize], seed: u64) -> Result<Tensor<T>> {
    msra_init(shape, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// k×k bilinear interpolation kernel for upsampling by `factor`, k = 2·factor.
pub fn bilinear_kernel<T: Scalar>(factor: usize) -> Result<Tensor<T>> {
    if factor == 0 {
        return Err(Error::invalid("upsampling factor must be at least 1"));
    }
    let size = 2 * factor;
    let f = size.div_ceil(2) as f64;
    let center = if size % 2 == 1 { f - 1.0 } else { f - 0.5 };
    let tap = |i: usize| 1.0 - (i as f64 - center).abs() / f;
    Tensor::from_fn(&[size, size], |idx| T::lit(tap(idx / size) * tap(idx % size)))
}

/// Transposed-convolution weight (C×C×k×k) that bilinearly upsamples each
/// channel independently.
pub fn bilinear_deconv_init<T: Scalar>(channels: usize, factor: usize) -> Result<Tensor<T>> {
    let kernel = bilinear_kernel::<T>(factor)?;
    let k = 2 * factor;
    let mut w = Tensor::zeros(&[channels, channels, k, k])?;
    for c in 0..channels {
        let start = (c * channels + c) * k * k;
        w.data_mut()[start..start + k * k].copy_from_slice(kernel.data());
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_fan_in_and_low_rank_rejected() {
        assert!(fan_in(&[4]).is_err());
        assert_eq!(fan_in(&[64, 3, 11, 11]).unwrap(), 363);
        assert_eq!(fan_in(&[256, 36864]).unwrap(), 36864);
    }

    #[test]
    fn seeded_draws_are_reproducible() {
        let a = msra_init_seeded::<f32>(&[8, 3, 3, 3], 7).unwrap();
        let b = msra_init_seeded::<f32>(&[8, 3, 3, 3], 7).unwrap();
        let c = msra_init_seeded::<f32>(&[8, 3, 3, 3], 8).unwrap();
        assert_eq!(a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_ne!(a, c);
    }

    #[test]
    fn bilinear_kernels() {
        let k1 = bilinear_kernel::<f64>(1).unwrap();
        assert_eq!(k1.data(), &[0.25; 4]);
        let k2 = bilinear_kernel::<f64>(2).unwrap();
        let expect_1d = [0.25, 0.75, 0.75, 0.25];
        for i in 0..4 {
            for j in 0..4 {
                assert!((k2.data()[i * 4 + j] - expect_1d[i] * expect_1d[j]).abs() < 1e-15);
                assert_eq!(k2.data()[i * 4 + j], k2.data()[j * 4 + i]);
            }
        }
        assert!(bilinear_kernel::<f64>(0).is_err());
    }
}
