//! Verification and bookkeeping commands: gradient check, parameter count,
//! synthetic data.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use bodyfuse::data::{gen_synthetic, SynthConfig};
use bodyfuse::fashionnet::cls_loss;
use bodyfuse::gradcheck::{finite_diff_gradcheck, GradCheckConfig, GradCheckReport, TapeObjective};
use bodyfuse::nn::{Bindings, ParamRegistry, Role};
use bodyfuse::segnet::seg_loss;
use bodyfuse::{FashionNet, FashionNetConfig, LayerShape, Mode, Preset, SegNet, SegNetConfig, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::Task;
use crate::error::{CliError, Result};

/// Spatial size of the random segmentation batch used by the gradient check.
pub const SEG_CHECK_HW: usize = 16;
pub const CHECK_BATCH: usize = 2;

fn random_input(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(0.0..1.0)).expect("positive extents")
}

fn gradcheck_config(seed: u64, samples: usize) -> GradCheckConfig {
    GradCheckConfig { max_per_tensor: (samples > 0).then_some(samples), seed, ..GradCheckConfig::default() }
}

fn bind(names: &[String], vars: &[Var]) -> Bindings {
    Bindings::from_pairs(names.iter().cloned().zip(vars.iter().copied()))
}

/// Central-difference check of every trainable tensor of the mini network
/// for `task`, in f64, on a random batch. `samples` caps the coordinates
/// checked per tensor (0 = all).
pub fn gradcheck(task: Task, seed: u64, samples: usize) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = gradcheck_config(seed, samples);
    let report = match task {
        Task::Seg => {
            let mut net = SegNet::<f64>::build(SegNetConfig::mini(), seed)?;
            let hw = SEG_CHECK_HW;
            let x = random_input(&[CHECK_BATCH, 3, hw, hw], &mut rng);
            let y = Tensor::from_fn(&[CHECK_BATCH, 1, hw, hw], |_| if rng.random_bool(0.4) { 1.0 } else { 0.0 })?;
            let names = net.params.trainable_names();
            let values = net.params.trainable_values();
            let mut obj = TapeObjective(|tape: &mut Tape<f64>, vars: &[Var]| {
                let input = tape.constant(x.clone())?;
                let out = net.forward(tape, &bind(&names, vars), input, Mode::Train)?;
                seg_loss(tape, out.fused, &y)
            });
            finite_diff_gradcheck(&mut obj, &names, &values, &config)?
        }
        Task::Cls => {
            let mut net = FashionNet::<f64>::build(FashionNetConfig::mini(), seed)?;
            let c = net.config.clone();
            let x = random_input(&[CHECK_BATCH, c.in_channels, c.input_h, c.input_w], &mut rng);
            let labels: Vec<usize> = (0..CHECK_BATCH).map(|_| rng.random_range(0..c.class_count)).collect();
            let names = net.params.trainable_names();
            let values = net.params.trainable_values();
            let mut obj = TapeObjective(|tape: &mut Tape<f64>, vars: &[Var]| {
                let input = tape.constant(x.clone())?;
                let logits = net.forward(tape, &bind(&names, vars), input, Mode::Train)?;
                cls_loss(tape, logits, &labels)
            });
            finite_diff_gradcheck(&mut obj, &names, &values, &config)?
        }
    };
    Ok(report)
}

pub fn render_gradcheck(task: Task, report: &GradCheckReport) -> String {
    let mut out = String::new();
    writeln!(out, "gradcheck {} mini: {} coordinates in {} tensors", task.name(), report.checked(), report.params.len()).unwrap();
    for p in &report.params {
        writeln!(out, "  {:<32} {:>6} checked  max rel err {:.3e}", p.name, p.checked, p.max_rel_error).unwrap();
    }
    let verdict = if report.passed() { "PASS" } else { "FAIL" };
    writeln!(out, "max relative error {:.3e} (tolerance {:e}): {verdict}", report.max_rel_error(), report.tolerance).unwrap();
    out
}

/// Error listing the worst offenders when the check failed.
pub fn gradcheck_verdict(report: &GradCheckReport) -> Result<()> {
    if report.passed() {
        return Ok(());
    }
    let worst: Vec<String> = report
        .worst(5)
        .iter()
        .filter(|p| p.max_rel_error >= report.tolerance)
        .map(|p| {
            format!("{}[{}] rel err {:.3e} (analytic {:e}, numeric {:e})", p.name, p.worst_index, p.max_rel_error, p.analytic, p.numeric)
        })
        .collect();
    Err(CliError::GradCheckFailed(format!("tolerance {:e} exceeded: {}", report.tolerance, worst.join("; "))))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerCount {
    pub layer: String,
    pub weights: usize,
    pub biases: usize,
    pub bn_affine: usize,
    /// Output shape for classifier layers.
    pub output: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamTable {
    pub rows: Vec<LayerCount>,
}

impl ParamTable {
    pub fn total_weights(&self) -> usize {
        self.rows.iter().map(|r| r.weights).sum()
    }

    pub fn total_biases(&self) -> usize {
        self.rows.iter().map(|r| r.biases).sum()
    }

    pub fn total_bn_affine(&self) -> usize {
        self.rows.iter().map(|r| r.bn_affine).sum()
    }
}

/// Layer name of a parameter: its path without the tensor name and any `/bn` suffix.
fn layer_of(name: &str) -> &str {
    let layer = name.rsplit_once('/').map_or(name, |(l, _)| l);
    layer.strip_suffix("/bn").unwrap_or(layer)
}

fn table(params: &ParamRegistry<f32>, trace: Option<&[LayerShape]>) -> ParamTable {
    let mut rows: Vec<LayerCount> = Vec::new();
    for (name, p) in params.iter() {
        let layer = layer_of(name);
        if rows.last().is_none_or(|r| r.layer != layer) {
            let output = trace.and_then(|t| t.iter().find(|s| s.name == layer)).map(LayerShape::output_label);
            rows.push(LayerCount { layer: layer.to_string(), weights: 0, biases: 0, bn_affine: 0, output });
        }
        let row = rows.last_mut().expect("pushed above");
        match p.role {
            Role::Weight => row.weights += p.value.len(),
            Role::Bias => row.biases += p.value.len(),
            Role::BnGamma | Role::BnBeta => row.bn_affine += p.value.len(),
            Role::BnRunning => {}
        }
    }
    ParamTable { rows }
}

pub fn param_table(task: Task, preset: Preset) -> Result<ParamTable> {
    Ok(match task {
        Task::Seg => table(&SegNet::<f32>::build(SegNetConfig::preset(preset), 0)?.params, None),
        Task::Cls => {
            let config = FashionNetConfig::preset(preset);
            let trace = config.shape_trace()?;
            table(&FashionNet::<f32>::build(config, 0)?.params, Some(&trace))
        }
    })
}

/// Approximate parameter count of AlexNet, for the comparison note only.
pub const ALEXNET_PARAMS: f64 = 61.0e6;

pub fn render_param_table(task: Task, preset: Preset, t: &ParamTable) -> String {
    let mut out = String::new();
    writeln!(out, "{:<28} {:>10} {:>8} {:>9}  output", "layer", "weights", "biases", "bn_affine").unwrap();
    for r in &t.rows {
        let output = r.output.as_deref().unwrap_or("-");
        writeln!(out, "{:<28} {:>10} {:>8} {:>9}  {output}", r.layer, r.weights, r.biases, r.bn_affine).unwrap();
    }
    writeln!(out, "total weights: {}", t.total_weights()).unwrap();
    writeln!(out, "total biases: {}", t.total_biases()).unwrap();
    writeln!(out, "total batch-norm affine: {}", t.total_bn_affine()).unwrap();
    writeln!(out, "total trainable: {}", t.total_weights() + t.total_biases() + t.total_bn_affine()).unwrap();
    if (task, preset) == (Task::Cls, Preset::Full) {
        let ratio = ALEXNET_PARAMS / t.total_weights() as f64;
        writeln!(
            out,
            "note: AlexNet has about 61M parameters, {ratio:.1}x this network; a 1/17 ratio would need about {:.1}M",
            ALEXNET_PARAMS / 17.0 / 1e6
        )
        .unwrap();
    }
    out
}

pub fn synth(config: &SynthConfig, out_dir: &Path) -> Result<PathBuf> {
    Ok(gen_synthetic(config, out_dir)?)
}
