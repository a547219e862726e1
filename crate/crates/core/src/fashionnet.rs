//! Lightweight fashion-year classification network.
//!
//! Five convolutions (each `conv → BN → ReLU`), a 3×3/2 ceil-mode max pool
//! after each of the first four, then two inner products with a ReLU between
//! them. The full preset yields the reference layer shapes for 768×384
//! inputs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layers::{Builder, Ctx, Preset};
use crate::nn::{Bindings, ParamRegistry};
use crate::ops::conv::ConvGeometry;
use crate::ops::{argmax, pool_out, softmax, Mode};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const CONV_LAYERS: usize = 5;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FashionNetConfig {
    pub input_h: usize,
    pub input_w: usize,
    pub in_channels: usize,
    pub class_count: usize,
    pub channels: [usize; CONV_LAYERS],
    pub kernels: [usize; CONV_LAYERS],
    pub strides: [usize; CONV_LAYERS],
    pub pads: [usize; CONV_LAYERS],
    pub pool_kernel: usize,
    pub pool_stride: usize,
    pub ip1_units: usize,
    pub preset: Option<Preset>,
}

impl FashionNetConfig {
    pub fn full() -> Self {
        Self {
            input_h: 768,
            input_w: 384,
            in_channels: 3,
            class_count: 8,
            channels: [64, 128, 256, 384, 512],
            kernels: [11, 5, 3, 3, 3],
            strides: [4, 1, 1, 1, 1],
            pads: [4, 2, 1, 1, 1],
            pool_kernel: 3,
            pool_stride: 2,
            ip1_units: 256,
            preset: Some(Preset::Full),
        }
    }

    /// Desk-scale variant for 96×48 inputs. The first convolution uses
    /// stride 2 / pad 5 so that four 3×3/2 pools still fit (stride 4 would
    /// leave a 3×1 map before the last pool).
    pub fn mini() -> Self {
        Self {
            input_h: 96,
            input_w: 48,
            in_channels: 3,
            class_count: 4,
            channels: [8, 16, 16, 24, 32],
            kernels: [11, 5, 3, 3, 3],
            strides: [2, 1, 1, 1, 1],
            pads: [5, 2, 1, 1, 1],
            pool_kernel: 3,
            pool_stride: 2,
            ip1_units: 32,
            preset: Some(Preset::Mini),
        }
    }

    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Full => Self::full(),
            Preset::Mini => Self::mini(),
        }
    }

    /// Output shape of every layer, computed from the shape formulas alone.
    pub fn shape_trace(&self) -> Result<Vec<LayerShape>> {
        if self.class_count < 2 {
            return Err(Error::invalid("class_count must be at least 2"));
        }
        if self.ip1_units == 0 || self.channels.contains(&0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        let mut trace = Vec::new();
        let (mut h, mut w) = (self.input_h, self.input_w);
        for i in 0..CONV_LAYERS {
            let g = ConvGeometry::new(self.kernels[i], self.strides[i], self.pads[i]);
            h = g.conv_out(h).map_err(|e| self.inconsistent(&format!("conv{}", i + 1), e))?;
            w = g.conv_out(w).map_err(|e| self.inconsistent(&format!("conv{}", i + 1), e))?;
            trace.push(LayerShape {
                name: format!("conv{}", i + 1),
                kind: LayerKind::Convolution,
                kernel: Some((self.kernels[i], self.strides[i])),
                output: vec![h, w, self.channels[i]],
            });
            if i + 1 < CONV_LAYERS {
                let name = format!("pool{}", i + 1);
                h = pool_out(h, self.pool_kernel, self.pool_stride, true).map_err(|e| self.inconsistent(&name, e))?;
                w = pool_out(w, self.pool_kernel, self.pool_stride, true).map_err(|e| self.inconsistent(&name, e))?;
                trace.push(LayerShape {
                    name,
                    kind: LayerKind::MaxPooling,
                    kernel: Some((self.pool_kernel, self.pool_stride)),
                    output: vec![h, w, self.channels[i]],
                });
            }
        }
        for (name, units) in [("ip1", self.ip1_units), ("ip2", self.class_count)] {
            trace.push(LayerShape { name: name.into(), kind: LayerKind::InnerProduct, kernel: None, output: vec![units] });
        }
        Ok(trace)
    }

    fn inconsistent(&self, layer: &str, e: Error) -> Error {
        Error::invalid(format!("inconsistent configuration at {layer} for {}×{} input: {e}", self.input_h, self.input_w))
    }

    /// Flattened feature length entering the first inner product.
    pub fn flat_features(&self) -> Result<usize> {
        let trace = self.shape_trace()?;
        let last_conv = &trace[2 * CONV_LAYERS - 2];
        Ok(last_conv.output.iter().product())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Convolution,
    MaxPooling,
    InnerProduct,
}

/// One row of a shape trace; `output` is H×W×C for spatial layers and `[units]` otherwise.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerShape {
    pub name: String,
    pub kind: LayerKind,
    /// `(kernel, stride)` for convolution and pooling.
    pub kernel: Option<(usize, usize)>,
    pub output: Vec<usize>,
}

impl LayerShape {
    /// Output size rendered as `H × W × C` or `U`.
    pub fn output_label(&self) -> String {
        self.output.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(" × ")
    }
}

#[derive(Clone, Debug)]
pub struct ClsPrediction<T> {
    pub logits: Tensor<T>,
    pub probabilities: Tensor<T>,
    pub labels: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct FashionNet<T> {
    pub config: FashionNetConfig,
    pub params: ParamRegistry<T>,
}

impl<T: Scalar> FashionNet<T> {
    pub fn build(config: FashionNetConfig, seed: u64) -> Result<Self> {
        let flat = config.flat_features()?;
        let mut params = ParamRegistry::new();
        let mut b = Builder { reg: &mut params, rng: ChaCha8Rng::seed_from_u64(seed) };
        let mut c_in = config.in_channels;
        for i in 0..CONV_LAYERS {
            let name = format!("conv{}", i + 1);
            b.conv(&name, config.channels[i], c_in, config.kernels[i], false)?;
            b.batchnorm(&format!("{name}/bn"), config.channels[i])?;
            c_in = config.channels[i];
        }
        b.inner_product("ip1", config.ip1_units, flat)?;
        b.inner_product("ip2", config.class_count, config.ip1_units)?;
        Ok(Self { config, params })
    }

    pub fn check_input(&self, shape: &[usize]) -> Result<()> {
        let c = &self.config;
        let expected = [c.in_channels, c.input_h, c.input_w];
        match shape {
            [_, rest @ ..] if rest == expected => Ok(()),
            _ => Err(Error::shape(format!(
                "classifier expects N×{}×{}×{} input, got {shape:?}",
                c.in_channels, c.input_h, c.input_w
            ))),
        }
    }

    /// Logits, N×class_count.
    pub fn forward(&mut self, tape: &mut Tape<T>, vars: &Bindings, input: Var, mode: Mode) -> Result<Var> {
        self.check_input(tape.value(input).shape())?;
        let config = self.config.clone();
        let mut ctx = Ctx { tape, reg: &mut self.params, vars, mode };
        let mut x = input;
        for i in 0..CONV_LAYERS {
            x = ctx.conv_bn_relu(&format!("conv{}", i + 1), x, config.strides[i], config.pads[i])?;
            if i + 1 < CONV_LAYERS {
                x = ctx.tape.maxpool2d(x, config.pool_kernel, config.pool_stride, true)?.0;
            }
        }
        let x = ctx.tape.flatten(x)?;
        let x = ctx.inner_product("ip1", x)?;
        let x = ctx.tape.relu(x)?;
        ctx.inner_product("ip2", x)
    }

    pub fn forward_input(&mut self, tape: &mut Tape<T>, input: &Tensor<T>, mode: Mode) -> Result<(Var, Bindings)> {
        let vars = self.params.bind(tape)?;
        let x = tape.constant(input.clone())?;
        Ok((self.forward(tape, &vars, x, mode)?, vars))
    }

    pub fn predict(&mut self, input: &Tensor<T>) -> Result<ClsPrediction<T>> {
        let mut tape = Tape::new();
        let (logits, _) = self.forward_input(&mut tape, input, Mode::Infer)?;
        predict_label(tape.value(logits))
    }
}

pub fn cls_loss<T: Scalar>(tape: &mut Tape<T>, logits: Var, labels: &[usize]) -> Result<Var> {
    tape.softmax_ce_loss(logits, labels)
}

/// Softmax probabilities and arg-max labels (lowest index on ties).
pub fn predict_label<T: Scalar>(logits: &Tensor<T>) -> Result<ClsPrediction<T>> {
    let (_, k) = logits.dims2()?;
    let probabilities = softmax(logits)?;
    let labels = logits.data().chunks(k).map(argmax).collect();
    Ok(ClsPrediction { logits: logits.clone(), probabilities, labels })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mini_trace_is_consistent() {
        let trace = FashionNetConfig::mini().shape_trace().unwrap();
        let labels: Vec<String> = trace.iter().map(LayerShape::output_label).collect();
        assert_eq!(
            labels,
            ["48 × 24 × 8", "24 × 12 × 8", "24 × 12 × 16", "12 × 6 × 16", "12 × 6 × 16", "6 × 3 × 16", "6 × 3 × 24", "3 × 1 × 24", "3 × 1 × 32", "32", "4"]
        );
    }

    #[test]
    fn stride_four_mini_is_inconsistent() {
        let mut c = FashionNetConfig::mini();
        c.strides[0] = 4;
        c.pads[0] = 4;
        assert!(matches!(c.shape_trace(), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn logits_shape_and_extent_errors() {
        let mut net = FashionNet::<f32>::build(FashionNetConfig::mini(), 3).unwrap();
        let x = Tensor::full(&[2, 3, 96, 48], 0.5).unwrap();
        let mut tape = Tape::new();
        let (logits, _) = net.forward_input(&mut tape, &x, Mode::Train).unwrap();
        assert_eq!(tape.value(logits).shape(), &[2, 4]);
        let bad = Tensor::zeros(&[1, 3, 96, 50]).unwrap();
        let err = net.forward_input(&mut Tape::new(), &bad, Mode::Infer).unwrap_err().to_string();
        assert!(err.contains("96×48") && err.contains("50"), "{err}");
    }

    #[test]
    fn prediction_tie_break() {
        let logits = Tensor::<f64>::from_vec(&[2, 4], vec![5.0, 0.0, 0.0, 0.0, 1.0, 2.0, 2.0, 0.0]).unwrap();
        let p = predict_label(&logits).unwrap();
        assert_eq!(p.labels, vec![0, 1]);
        let loss = crate::ops::softmax_ce_loss(&logits.narrow_batch(0, 1).unwrap(), &[0]).unwrap();
        // −ln(e^5 / (e^5 + 3)) ≈ 0.020
        assert!((loss - (1.0 + 3.0 * (-5.0f64).exp()).ln()).abs() < 1e-12 && loss < 0.021);
    }
}
