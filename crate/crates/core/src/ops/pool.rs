//! Max pooling with recorded argmax positions, and index-driven unpooling.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Argmax positions recorded by [`maxpool2d`].
///
/// Each entry is the flat `y·W + x` coordinate, within its own input plane,
/// of the maximum of the corresponding pooling window.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolIndices {
    /// Shape of the pooled output (N×C×H'×W').
    pub shape: [usize; 4],
    /// Spatial extent of the pooled input plane.
    pub input_hw: (usize, usize),
    pub indices: Vec<usize>,
}

/// Output extent of a pooling window sweep.
pub fn pool_out(extent: usize, kernel: usize, stride: usize, ceil_mode: bool) -> Result<usize> {
    if kernel == 0 || stride == 0 {
        return Err(Error::invalid(format!("pool kernel ({kernel}) and stride ({stride}) must be positive")));
    }
    if kernel > extent {
        return Err(Error::shape(format!("pool kernel {kernel} exceeds input extent {extent}")));
    }
    let span = extent - kernel;
    let mut out = if ceil_mode { span.div_ceil(stride) + 1 } else { span / stride + 1 };
    // A trailing window that would start past the input is dropped.
    if ceil_mode && (out - 1) * stride >= extent {
        out -= 1;
    }
    Ok(out)
}

pub fn maxpool2d<T: Scalar>(
    input: &Tensor<T>,
    kernel: usize,
    stride: usize,
    ceil_mode: bool,
) -> Result<(Tensor<T>, PoolIndices)> {
    let (n, c, h, w) = input.dims4()?;
    let oh = pool_out(h, kernel, stride, ceil_mode)?;
    let ow = pool_out(w, kernel, stride, ceil_mode)?;
    let mut out = Tensor::zeros(&[n, c, oh, ow])?;
    let mut indices = Vec::with_capacity(n * c * oh * ow);
    for (plane, dst) in input.data().chunks(h * w).zip(out.data_mut().chunks_mut(oh * ow)) {
        for oy in 0..oh {
            let y0 = oy * stride;
            let y1 = (y0 + kernel).min(h);
            for ox in 0..ow {
                let x0 = ox * stride;
                let x1 = (x0 + kernel).min(w);
                let mut best = y0 * w + x0;
                let mut best_v = plane[best];
                for y in y0..y1 {
                    for x in x0..x1 {
                        let v = plane[y * w + x];
                        // strict comparison keeps the lowest flat index on ties
                        if v > best_v {
                            best_v = v;
                            best = y * w + x;
                        }
                    }
                }
                dst[oy * ow + ox] = best_v;
                indices.push(best);
            }
        }
    }
    Ok((out, PoolIndices { shape: [n, c, oh, ow], input_hw: (h, w), indices }))
}

/// Routes pooled gradients back to the recorded argmax positions.
pub fn maxpool2d_backward<T: Scalar>(grad_out: &Tensor<T>, idx: &PoolIndices) -> Result<Tensor<T>> {
    max_unpool2d(grad_out, idx, idx.input_hw)
}

/// Scatters `values` into a zero tensor of spatial size `out_hw` at the
/// positions in `idx`. Entries sharing a position accumulate.
pub fn max_unpool2d<T: Scalar>(values: &Tensor<T>, idx: &PoolIndices, out_hw: (usize, usize)) -> Result<Tensor<T>> {
    let (n, c, ph, pw) = values.dims4()?;
    if [n, c, ph, pw] != idx.shape {
        return Err(Error::shape(format!(
            "unpool values have shape {:?}, indices were recorded for {:?}",
            values.shape(),
            idx.shape
        )));
    }
    let (h, w) = out_hw;
    let plane = h * w;
    let mut out = Tensor::zeros(&[n, c, h, w])?;
    let pooled = ph * pw;
    for (p, dst) in out.data_mut().chunks_mut(plane).enumerate() {
        let src = &values.data()[p * pooled..(p + 1) * pooled];
        let ids = &idx.indices[p * pooled..(p + 1) * pooled];
        for (&v, &i) in src.iter().zip(ids) {
            if i >= plane {
                return Err(Error::shape(format!("unpool index {i} lies outside the {h}×{w} output plane")));
            }
            dst[i] += v;
        }
    }
    Ok(out)
}

/// Gradient of [`max_unpool2d`]: gathers the output gradient at each recorded position.
pub fn max_unpool2d_backward<T: Scalar>(grad_out: &Tensor<T>, idx: &PoolIndices) -> Result<Tensor<T>> {
    let (_, _, h, w) = grad_out.dims4()?;
    let plane = h * w;
    let pooled = idx.shape[2] * idx.shape[3];
    let mut d_values = Tensor::zeros(&idx.shape)?;
    for (p, dst) in d_values.data_mut().chunks_mut(pooled).enumerate() {
        let src = &grad_out.data()[p * plane..(p + 1) * plane];
        for (d, &i) in dst.iter_mut().zip(&idx.indices[p * pooled..(p + 1) * pooled]) {
            *d = src[i];
        }
    }
    Ok(d_values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_window() {
        let x = Tensor::<f64>::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (v, idx) = maxpool2d(&x, 2, 2, false).unwrap();
        assert_eq!(v.data(), &[4.0]);
        assert_eq!(idx.indices, vec![3]);
    }

    #[test]
    fn ceil_mode_extents() {
        assert_eq!(pool_out(192, 3, 2, true).unwrap(), 96);
        assert_eq!(pool_out(192, 3, 2, false).unwrap(), 95);
        assert_eq!(pool_out(96, 3, 2, true).unwrap(), 48);
        assert_eq!(pool_out(5, 2, 2, true).unwrap(), 3);
        // stride larger than kernel: the ceil window starting at 6 ≥ 6 is dropped
        assert_eq!(pool_out(6, 1, 3, true).unwrap(), 2);
    }

    #[test]
    fn invalid_pool_arguments() {
        assert!(pool_out(4, 0, 1, false).is_err());
        assert!(pool_out(4, 2, 0, false).is_err());
        assert!(pool_out(2, 3, 1, true).is_err());
    }

    #[test]
    fn ties_pick_lowest_index() {
        let x = Tensor::<f64>::full(&[1, 1, 2, 2], 7.0).unwrap();
        let (_, idx) = maxpool2d(&x, 2, 2, false).unwrap();
        assert_eq!(idx.indices, vec![0]);
    }

    #[test]
    fn unpool_scatter() {
        let v = Tensor::<f64>::from_vec(&[1, 1, 1, 1], vec![4.0]).unwrap();
        let idx = PoolIndices { shape: [1, 1, 1, 1], input_hw: (2, 2), indices: vec![3] };
        let y = max_unpool2d(&v, &idx, (2, 2)).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0, 0.0, 4.0]);
    }

    #[test]
    fn unpool_rejects_out_of_range_index() {
        let v = Tensor::<f64>::from_vec(&[1, 1, 1, 1], vec![4.0]).unwrap();
        let idx = PoolIndices { shape: [1, 1, 1, 1], input_hw: (2, 2), indices: vec![4] };
        assert!(max_unpool2d(&v, &idx, (2, 2)).is_err());
    }
}
