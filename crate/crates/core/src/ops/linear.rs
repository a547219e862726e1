use crate::error::{Error, Result};
use crate::ops::gemm::{gemm_nn, gemm_nt, gemm_tn};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Fully connected layer: `out[n,u] = Σ_d input[n,d]·weight[u,d] + bias[u]`.
pub fn inner_product<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, bias: Option<&Tensor<T>>) -> Result<Tensor<T>> {
    let (n, d) = input.dims2()?;
    let (u, wd) = weight.dims2()?;
    if wd != d {
        return Err(Error::shape(format!("inner product weight expects {wd} features, input has {d}")));
    }
    let mut out = Tensor::zeros(&[n, u])?;
    if let Some(b) = bias {
        if b.len() != u {
            return Err(Error::shape(format!("inner product bias has {} entries, expected {u}", b.len())));
        }
        for row in out.data_mut().chunks_mut(u) {
            row.copy_from_slice(b.data());
        }
    }
    gemm_nt(n, u, d, input.data(), weight.data(), out.data_mut());
    Ok(out)
}

pub struct LinearGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn inner_product_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<LinearGrads<T>> {
    let (n, d) = input.dims2()?;
    let (u, _) = weight.dims2()?;
    let mut d_input = input.zeros_like();
    gemm_nn(n, d, u, grad_out.data(), weight.data(), d_input.data_mut());
    let mut d_weight = weight.zeros_like();
    gemm_tn(u, d, n, grad_out.data(), input.data(), d_weight.data_mut());
    let mut d_bias = Tensor::zeros(&[u])?;
    for row in grad_out.data().chunks(u) {
        for (b, &g) in d_bias.data_mut().iter_mut().zip(row) {
            *b += g;
        }
    }
    Ok(LinearGrads { input: d_input, weight: d_weight, bias: d_bias })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weight() {
        let x = Tensor::<f64>::from_vec(&[2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.0, 9.0]).unwrap();
        let eye = Tensor::from_fn(&[3, 3], |i| if i % 4 == 0 { 1.0 } else { 0.0 }).unwrap();
        let y = inner_product(&x, &eye, Some(&Tensor::zeros(&[3]).unwrap())).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn weight_gradient_is_outer_product() {
        let x = Tensor::<f64>::from_vec(&[1, 2], vec![3.0, -1.0]).unwrap();
        let w = Tensor::zeros(&[2, 2]).unwrap();
        let g = Tensor::from_vec(&[1, 2], vec![0.5, 2.0]).unwrap();
        let grads = inner_product_backward(&x, &w, &g).unwrap();
        assert_eq!(grads.weight.data(), &[1.5, -0.5, 6.0, -2.0]);
        assert_eq!(grads.bias.data(), &[0.5, 2.0]);
    }

    #[test]
    fn feature_mismatch() {
        let x = Tensor::<f64>::zeros(&[1, 4]).unwrap();
        assert!(inner_product(&x, &Tensor::zeros(&[2, 3]).unwrap(), None).is_err());
    }
}
