//! 2-D convolution (cross-correlation) and transposed convolution via im2col.

use crate::error::{Error, Result};
use crate::ops::gemm::{gemm_nn, gemm_nt, gemm_tn};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Spatial geometry of a square-kernel convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeometry {
    pub fn new(kernel: usize, stride: usize, pad: usize) -> Self {
        Self { kernel, stride, pad }
    }

    /// Output extent of a forward convolution over an input extent.
    pub fn conv_out(&self, extent: usize) -> Result<usize> {
        if self.kernel == 0 || self.stride == 0 {
            return Err(Error::invalid(format!("kernel and stride must be positive, got {self:?}")));
        }
        let padded = extent
            .checked_add(2 * self.pad)
            .ok_or_else(|| Error::shape("padded extent overflows"))?;
        if self.kernel > padded {
            return Err(Error::shape(format!(
                "kernel {} exceeds padded input extent {padded} (extent {extent}, pad {})",
                self.kernel, self.pad
            )));
        }
        Ok((padded - self.kernel) / self.stride + 1)
    }

    /// Output extent of a transposed convolution: `(extent−1)·stride − 2·pad + kernel`.
    pub fn conv_transpose_out(&self, extent: usize) -> Result<usize> {
        if self.kernel == 0 || self.stride == 0 || extent == 0 {
            return Err(Error::invalid(format!("invalid transposed convolution {self:?} on extent {extent}")));
        }
        let grown = (extent - 1)
            .checked_mul(self.stride)
            .and_then(|v| v.checked_add(self.kernel))
            .ok_or_else(|| Error::shape("transposed convolution extent overflows"))?;
        grown
            .checked_sub(2 * self.pad)
            .filter(|&v| v > 0)
            .ok_or_else(|| Error::shape(format!("transposed convolution {self:?} on extent {extent} yields no output")))
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.pad == 0
    }
}

/// Unfolds one C×H×W image into a (C·k·k)×(oh·ow) matrix.
pub fn im2col<T: Scalar>(
    x: &[T],
    (c, h, w): (usize, usize, usize),
    g: ConvGeometry,
    (oh, ow): (usize, usize),
    col: &mut [T],
) {
    let k = g.kernel;
    let plane = oh * ow;
    for ch in 0..c {
        let src = &x[ch * h * w..(ch + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (ch * k + ki) * k + kj;
                let dst = &mut col[row * plane..(row + 1) * plane];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let out = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= h as isize {
                        out.fill(T::zero());
                        continue;
                    }
                    let src_row = &src[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, o) in out.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        *o = if ix < 0 || ix >= w as isize { T::zero() } else { src_row[ix as usize] };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-adds columns back into a C×H×W image.
pub fn col2im<T: Scalar>(
    col: &[T],
    (c, h, w): (usize, usize, usize),
    g: ConvGeometry,
    (oh, ow): (usize, usize),
    x: &mut [T],
) {
    let k = g.kernel;
    let plane = oh * ow;
    for ch in 0..c {
        let dst = &mut x[ch * h * w..(ch + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (ch * k + ki) * k + kj;
                let src = &col[row * plane..(row + 1) * plane];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst_row = &mut dst[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..ow {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && (ix as usize) < w {
                            dst_row[ix as usize] += src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

fn square_kernel<T: Scalar>(weight: &Tensor<T>) -> Result<(usize, usize, usize)> {
    let (a, b, kh, kw) = weight.dims4()?;
    if kh != kw {
        return Err(Error::shape(format!("only square kernels are supported, got {kh}×{kw}")));
    }
    Ok((a, b, kh))
}

/// Forward convolution. `weight` is C_out×C_in×k×k; `bias`, when given, has C_out entries.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let (n, c_in, h, w) = input.dims4()?;
    let (c_out, wc_in, k) = square_kernel(weight)?;
    if wc_in != c_in {
        return Err(Error::shape(format!(
            "conv2d weight expects {wc_in} input channels, input has {c_in}"
        )));
    }
    if let Some(b) = bias {
        if b.len() != c_out {
            return Err(Error::shape(format!("conv2d bias has {} entries, expected {c_out}", b.len())));
        }
    }
    let g = ConvGeometry::new(k, stride, pad);
    let (oh, ow) = (g.conv_out(h)?, g.conv_out(w)?);
    let mut out = Tensor::zeros(&[n, c_out, oh, ow])?;
    let rows = c_in * k * k;
    let plane = oh * ow;
    let mut col = if g.is_pointwise() { Vec::new() } else { vec![T::zero(); rows * plane] };
    for b in 0..n {
        let x = &input.data()[b * c_in * h * w..(b + 1) * c_in * h * w];
        let y = &mut out.data_mut()[b * c_out * plane..(b + 1) * c_out * plane];
        if let Some(bias) = bias {
            for (co, chunk) in y.chunks_mut(plane).enumerate() {
                chunk.fill(bias.data()[co]);
            }
        }
        let cols: &[T] = if g.is_pointwise() {
            x
        } else {
            im2col(x, (c_in, h, w), g, (oh, ow), &mut col);
            &col
        };
        gemm_nn(c_out, plane, rows, weight.data(), cols, y);
    }
    Ok(out)
}

/// Gradients of [`conv2d`].
pub struct Conv2dGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Conv2dGrads<T>> {
    let (n, c_in, h, w) = input.dims4()?;
    let (c_out, _, k) = square_kernel(weight)?;
    let (_, _, oh, ow) = grad_out.dims4()?;
    let g = ConvGeometry::new(k, stride, pad);
    let rows = c_in * k * k;
    let plane = oh * ow;
    let mut d_input = input.zeros_like();
    let mut d_weight = weight.zeros_like();
    let mut d_bias = Tensor::zeros(&[c_out])?;
    let mut col = vec![T::zero(); rows * plane];
    let mut d_col = vec![T::zero(); rows * plane];
    for b in 0..n {
        let x = &input.data()[b * c_in * h * w..(b + 1) * c_in * h * w];
        let dy = &grad_out.data()[b * c_out * plane..(b + 1) * c_out * plane];
        for (co, chunk) in dy.chunks(plane).enumerate() {
            d_bias.data_mut()[co] += chunk.iter().copied().sum::<T>();
        }
        let dx = &mut d_input.data_mut()[b * c_in * h * w..(b + 1) * c_in * h * w];
        if g.is_pointwise() {
            gemm_nt(c_out, rows, plane, dy, x, d_weight.data_mut());
            gemm_tn(rows, plane, c_out, weight.data(), dy, dx);
        } else {
            im2col(x, (c_in, h, w), g, (oh, ow), &mut col);
            gemm_nt(c_out, rows, plane, dy, &col, d_weight.data_mut());
            d_col.fill(T::zero());
            gemm_tn(rows, plane, c_out, weight.data(), dy, &mut d_col);
            col2im(&d_col, (c_in, h, w), g, (oh, ow), dx);
        }
    }
    Ok(Conv2dGrads { input: d_input, weight: d_weight, bias: d_bias })
}

/// Gradient of [`conv2d`] with respect to its input only, for an input of
/// spatial size `input_hw`. This is the map that [`conv_transpose2d`] computes
/// in its forward pass.
pub fn conv2d_backward_data<T: Scalar>(
    grad_out: &Tensor<T>,
    weight: &Tensor<T>,
    input_hw: (usize, usize),
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let (n, c_out, oh, ow) = grad_out.dims4()?;
    let (wc_out, c_in, k) = square_kernel(weight)?;
    if wc_out != c_out {
        return Err(Error::shape(format!("weight has {wc_out} output channels, gradient has {c_out}")));
    }
    let g = ConvGeometry::new(k, stride, pad);
    let (h, w) = input_hw;
    if g.conv_out(h)? != oh || g.conv_out(w)? != ow {
        return Err(Error::shape(format!(
            "input {h}×{w} does not convolve to {oh}×{ow} under {g:?}"
        )));
    }
    let rows = c_in * k * k;
    let plane = oh * ow;
    let mut d_input = Tensor::zeros(&[n, c_in, h, w])?;
    let mut d_col = vec![T::zero(); rows * plane];
    for b in 0..n {
        let dy = &grad_out.data()[b * c_out * plane..(b + 1) * c_out * plane];
        d_col.fill(T::zero());
        gemm_tn(rows, plane, c_out, weight.data(), dy, &mut d_col);
        let dx = &mut d_input.data_mut()[b * c_in * h * w..(b + 1) * c_in * h * w];
        col2im(&d_col, (c_in, h, w), g, (oh, ow), dx);
    }
    Ok(d_input)
}

/// Transposed convolution. `weight` is C_in×C_out×k×k; output extent is
/// `(H−1)·stride − 2·pad + k`.
pub fn conv_transpose2d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let (_, c_in, h, w) = input.dims4()?;
    let (wc_in, _, k) = square_kernel(weight)?;
    if wc_in != c_in {
        return Err(Error::shape(format!(
            "conv_transpose2d weight expects {wc_in} input channels, input has {c_in}"
        )));
    }
    let g = ConvGeometry::new(k, stride, pad);
    let (oh, ow) = (g.conv_transpose_out(h)?, g.conv_transpose_out(w)?);
    conv2d_backward_data(input, weight, (oh, ow), stride, pad)
}

pub struct ConvTransposeGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
}

pub fn conv_transpose2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<ConvTransposeGrads<T>> {
    let (n, c_in, h, w) = input.dims4()?;
    let (_, c_out, k) = square_kernel(weight)?;
    let (_, _, oh, ow) = grad_out.dims4()?;
    let g = ConvGeometry::new(k, stride, pad);
    let rows = c_out * k * k;
    let plane = h * w;
    let mut d_input = input.zeros_like();
    let mut d_weight = weight.zeros_like();
    let mut col = vec![T::zero(); rows * plane];
    for b in 0..n {
        let dy = &grad_out.data()[b * c_out * oh * ow..(b + 1) * c_out * oh * ow];
        im2col(dy, (c_out, oh, ow), g, (h, w), &mut col);
        let x = &input.data()[b * c_in * plane..(b + 1) * c_in * plane];
        let dx = &mut d_input.data_mut()[b * c_in * plane..(b + 1) * c_in * plane];
        gemm_nn(c_in, plane, rows, weight.data(), &col, dx);
        gemm_nt(c_in, rows, plane, x, &col, d_weight.data_mut());
    }
    Ok(ConvTransposeGrads { input: d_input, weight: d_weight })
}
