//! Encoder-decoder body segmentation network with multi-scale fusion.
//!
//! The encoder is VGG16-shaped: per stage, `conv3×3 → BN → ReLU` repeated,
//! then a 2×2 max pool that records argmax positions. The decoder mirrors it,
//! upsampling with the recorded positions. The last conv of each of the first
//! four decoder stages (deepest first) feeds a side branch: a 1×1 conv to a
//! single score channel, then a learnable transposed convolution back to
//! input resolution. Those maps and the decoder's own full-resolution score
//! map are concatenated and fused by a 1×1 conv into the final logits.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layers::{Builder, Ctx, Preset};
use crate::metrics::iou;
use crate::nn::{Bindings, ParamRegistry};
use crate::ops::{sigmoid, Mode, PoolIndices};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Side branches tap at most this many decoder stages.
const MAX_BRANCHES: usize = 4;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegNetConfig {
    pub convs_per_stage: Vec<usize>,
    pub base_channels: usize,
    pub max_channels: usize,
    pub in_channels: usize,
    pub fusion_branch_channels: usize,
    pub preset: Option<Preset>,
}

impl SegNetConfig {
    pub fn full() -> Self {
        Self {
            convs_per_stage: vec![2, 2, 3, 3, 3],
            base_channels: 64,
            max_channels: 512,
            in_channels: 3,
            fusion_branch_channels: 1,
            preset: Some(Preset::Full),
        }
    }

    pub fn mini() -> Self {
        Self {
            convs_per_stage: vec![1, 1],
            base_channels: 8,
            max_channels: 512,
            in_channels: 3,
            fusion_branch_channels: 1,
            preset: Some(Preset::Mini),
        }
    }

    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Full => Self::full(),
            Preset::Mini => Self::mini(),
        }
    }

    pub fn stages(&self) -> usize {
        self.convs_per_stage.len()
    }

    /// Output channels of encoder stage `s` (1-based); stage 0 is the input.
    pub fn stage_channels(&self, s: usize) -> usize {
        if s == 0 {
            self.in_channels
        } else {
            (self.base_channels << (s - 1).min(30)).min(self.max_channels)
        }
    }

    pub fn branch_count(&self) -> usize {
        (self.stages() - 1).min(MAX_BRANCHES)
    }

    /// Decoder stages that carry a side branch, in execution order.
    pub fn branch_stages(&self) -> Vec<usize> {
        (1..=self.stages()).rev().take(self.branch_count()).collect()
    }

    /// Upsampling factor of each side branch, in execution order.
    pub fn upsample_factors(&self) -> Vec<usize> {
        self.branch_stages().into_iter().map(|s| 1 << (s - 1)).collect()
    }

    /// Spatial extents must be divisible by this.
    pub fn divisor(&self) -> usize {
        1 << self.stages()
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages() < 2 || self.stages() > 16 {
            return Err(Error::invalid(format!("segmentation network needs 2..=16 stages, got {}", self.stages())));
        }
        if self.convs_per_stage.contains(&0) {
            return Err(Error::invalid("every stage needs at least one convolution"));
        }
        if self.base_channels == 0 || self.in_channels == 0 || self.fusion_branch_channels == 0 || self.max_channels == 0 {
            return Err(Error::invalid("channel counts must be positive"));
        }
        Ok(())
    }

    pub fn check_input(&self, shape: &[usize]) -> Result<()> {
        let [_, c, h, w] = shape else {
            return Err(Error::shape(format!("expected an N×C×H×W input, got {shape:?}")));
        };
        if *c != self.in_channels {
            return Err(Error::shape(format!("expected {} input channels, got {c}", self.in_channels)));
        }
        let d = self.divisor();
        if h % d != 0 || w % d != 0 {
            return Err(Error::shape(format!("input {h}×{w} is not divisible by 2^{} = {d}", self.stages())));
        }
        Ok(())
    }
}

/// Layer counts of a built network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegArchitecture {
    pub encoder_convs: usize,
    pub pools: usize,
    pub decoder_convs: usize,
    pub side_branches: usize,
    pub fusion_convs: usize,
    /// `(decoder stage, encoder pool)` index pairing used by each unpool, in execution order.
    pub unpool_pairs: Vec<(usize, usize)>,
    pub upsample_factors: Vec<usize>,
}

/// Outputs of a forward pass.
#[derive(Clone, Debug)]
pub struct SegOutput {
    /// Pre-sigmoid fused score map, N×1×H×W.
    pub fused: Var,
    /// Pre-fusion full-resolution maps: side branches deepest first, then the
    /// decoder's own score map.
    pub scales: Vec<Var>,
}

#[derive(Clone, Debug)]
pub struct SegPrediction<T> {
    pub prob_map: Tensor<T>,
    pub mask: Tensor<T>,
    pub threshold: f64,
}

#[derive(Clone, Debug)]
pub struct SegNet<T> {
    pub config: SegNetConfig,
    pub params: ParamRegistry<T>,
}

fn enc(s: usize, i: usize) -> String {
    format!("enc/stage{s}/conv{i}")
}

fn dec(s: usize, i: usize) -> String {
    format!("dec/stage{s}/conv{i}")
}

impl<T: Scalar> SegNet<T> {
    /// Builds the registry with msra-initialized convolutions, zero biases,
    /// unit batch-norm scales and bilinear side-branch upsamplers.
    pub fn build(config: SegNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamRegistry::new();
        let mut b = Builder { reg: &mut params, rng: ChaCha8Rng::seed_from_u64(seed) };
        let stages = config.stages();
        for s in 1..=stages {
            for i in 0..config.convs_per_stage[s - 1] {
                let c_in = config.stage_channels(if i == 0 { s - 1 } else { s });
                let c_out = config.stage_channels(s);
                b.conv(&enc(s, i), c_out, c_in, 3, false)?;
                b.batchnorm(&format!("{}/bn", enc(s, i)), c_out)?;
            }
        }
        let fb = config.fusion_branch_channels;
        let branch_stages = config.branch_stages();
        for s in (1..=stages).rev() {
            let n = config.convs_per_stage[s - 1];
            for i in 0..n {
                let c_in = config.stage_channels(s);
                if s == 1 && i == n - 1 {
                    b.conv(&dec(s, i), 1, c_in, 3, true)?;
                } else {
                    let c_out = if i == n - 1 { config.stage_channels(s - 1) } else { c_in };
                    b.conv(&dec(s, i), c_out, c_in, 3, false)?;
                    b.batchnorm(&format!("{}/bn", dec(s, i)), c_out)?;
                }
            }
            if branch_stages.contains(&s) {
                b.conv(&format!("side/stage{s}/score"), fb, config.stage_channels(s - 1), 1, true)?;
                b.deconv_bilinear(&format!("side/stage{s}/upsample"), fb, 1 << (s - 1))?;
            }
        }
        b.conv("fuse/conv", 1, branch_stages.len() * fb + 1, 1, true)?;
        Ok(Self { config, params })
    }

    /// Structural summary derived from the registry.
    pub fn architecture(&self) -> SegArchitecture {
        let count = |prefix: &str| {
            self.params
                .iter()
                .filter(|(n, _)| n.starts_with(prefix) && n.contains("/conv") && n.ends_with("/weight"))
                .count()
        };
        let stages = self.config.stages();
        SegArchitecture {
            encoder_convs: count("enc/"),
            pools: stages,
            decoder_convs: count("dec/"),
            side_branches: self.params.iter().filter(|(n, _)| n.starts_with("side/") && n.ends_with("/score/weight")).count(),
            fusion_convs: count("fuse/"),
            unpool_pairs: (1..=stages).rev().map(|s| (s, s)).collect(),
            upsample_factors: self.config.upsample_factors(),
        }
    }

    /// Runs the network on `input` with the given parameter bindings.
    pub fn forward(&mut self, tape: &mut Tape<T>, vars: &Bindings, input: Var, mode: Mode) -> Result<SegOutput> {
        self.config.check_input(tape.value(input).shape())?;
        let config = self.config.clone();
        let stages = config.stages();
        let mut ctx = Ctx { tape, reg: &mut self.params, vars, mode };

        let mut x = input;
        let mut pools: Vec<(Arc<PoolIndices>, (usize, usize))> = Vec::with_capacity(stages);
        for s in 1..=stages {
            for i in 0..config.convs_per_stage[s - 1] {
                x = ctx.conv_bn_relu(&enc(s, i), x, 1, 1)?;
            }
            let shape = ctx.tape.value(x).shape();
            let hw = (shape[2], shape[3]);
            let (y, idx) = ctx.tape.maxpool2d(x, 2, 2, false)?;
            pools.push((idx, hw));
            x = y;
        }

        let branch_stages = config.branch_stages();
        let mut scales = Vec::with_capacity(branch_stages.len() + 1);
        for s in (1..=stages).rev() {
            let (idx, hw) = &pools[s - 1];
            x = ctx.tape.max_unpool2d(x, idx, *hw)?;
            let n = config.convs_per_stage[s - 1];
            for i in 0..n {
                x = if s == 1 && i == n - 1 {
                    ctx.conv(&dec(s, i), x, 1, 1)?
                } else {
                    ctx.conv_bn_relu(&dec(s, i), x, 1, 1)?
                };
            }
            if branch_stages.contains(&s) {
                let f = 1 << (s - 1);
                let score = ctx.conv(&format!("side/stage{s}/score"), x, 1, 0)?;
                scales.push(ctx.deconv(&format!("side/stage{s}/upsample"), score, f, f / 2)?);
            }
        }
        scales.push(x);
        let stacked = ctx.tape.concat_channels(&scales)?;
        let fused = ctx.conv("fuse/conv", stacked, 1, 0)?;
        Ok(SegOutput { fused, scales })
    }

    /// Binds the registry onto `tape` and runs [`SegNet::forward`].
    pub fn forward_input(&mut self, tape: &mut Tape<T>, input: &Tensor<T>, mode: Mode) -> Result<(SegOutput, Bindings)> {
        let vars = self.params.bind(tape)?;
        let x = tape.constant(input.clone())?;
        let out = self.forward(tape, &vars, x, mode)?;
        Ok((out, vars))
    }

    /// Probability map and thresholded mask in inference mode.
    pub fn predict(&mut self, input: &Tensor<T>, threshold: f64) -> Result<SegPrediction<T>> {
        let mut tape = Tape::new();
        let (out, _) = self.forward_input(&mut tape, input, Mode::Infer)?;
        let prob = sigmoid(tape.value(out.fused));
        Ok(predict_mask(&prob, threshold))
    }
}

/// Negative log-likelihood of the label map under the fused scores, summed
/// over pixels and batch items.
pub fn seg_loss<T: Scalar>(tape: &mut Tape<T>, scores: Var, labels: &Tensor<T>) -> Result<Var> {
    tape.sigmoid_bce_loss(scores, labels)
}

/// Thresholds a probability map; values equal to the threshold are background.
pub fn predict_mask<T: Scalar>(prob_map: &Tensor<T>, threshold: f64) -> SegPrediction<T> {
    let t = T::lit(threshold);
    let mask = prob_map.map(|p| if p > t { T::one() } else { T::zero() });
    SegPrediction { prob_map: prob_map.clone(), mask, threshold }
}

/// Per-item IoU between a predicted N×1×H×W mask and ground truth.
pub fn batch_ious<T: Scalar>(mask: &Tensor<T>, truth: &Tensor<T>) -> Result<Vec<f64>> {
    if mask.shape() != truth.shape() {
        return Err(Error::shape(format!("mask {:?} vs truth {:?}", mask.shape(), truth.shape())));
    }
    let n = mask.shape()[0];
    let per = mask.len() / n;
    let fg = |v: &T| *v > T::lit(0.5);
    (0..n)
        .map(|b| {
            let a: Vec<bool> = mask.data()[b * per..(b + 1) * per].iter().map(fg).collect();
            let t: Vec<bool> = truth.data()[b * per..(b + 1) * per].iter().map(fg).collect();
            iou(&t, &a)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_layer_counts() {
        let net = SegNet::<f32>::build(SegNetConfig::full(), 0).unwrap();
        let a = net.architecture();
        assert_eq!((a.encoder_convs, a.pools, a.decoder_convs, a.side_branches, a.fusion_convs), (13, 5, 13, 4, 1));
        assert_eq!(a.upsample_factors, vec![16, 8, 4, 2]);
    }

    #[test]
    fn mini_shapes() {
        let mut net = SegNet::<f32>::build(SegNetConfig::mini(), 1).unwrap();
        let x = Tensor::from_fn(&[1, 3, 64, 64], |i| ((i % 17) as f32) / 17.0).unwrap();
        let mut tape = Tape::new();
        let (out, _) = net.forward_input(&mut tape, &x, Mode::Train).unwrap();
        assert_eq!(tape.value(out.fused).shape(), &[1, 1, 64, 64]);
        assert_eq!(out.scales.len(), 2);
        for s in &out.scales {
            assert_eq!(tape.value(*s).shape(), &[1, 1, 64, 64]);
        }
    }

    #[test]
    fn indivisible_input_is_rejected() {
        let mut net = SegNet::<f32>::build(SegNetConfig::mini(), 1).unwrap();
        let x = Tensor::zeros(&[1, 3, 62, 64]).unwrap();
        assert!(net.forward_input(&mut Tape::new(), &x, Mode::Infer).is_err());
    }

    #[test]
    fn mask_threshold_ties_to_background() {
        let p = Tensor::<f64>::from_vec(&[4], vec![0.1, 0.5, 0.500001, 0.9]).unwrap();
        assert_eq!(predict_mask(&p, 0.5).mask.data(), &[0.0, 0.0, 1.0, 1.0]);
    }
}
