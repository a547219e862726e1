//! Training loops for both tasks.

use std::fs;
use std::path::{Path, PathBuf};

use bodyfuse::data::{BatchStream, Dataset, Require, Split};
use bodyfuse::fashionnet::cls_loss;
use bodyfuse::nn::{load_checkpoint, save_checkpoint, sgd_step, Gradients, SgdState};
use bodyfuse::segnet::seg_loss;
use bodyfuse::{Error, FashionNet, FashionNetConfig, Mode, ParamRegistry, SegNet, SegNetConfig, Tape};

use crate::config::{RunConfig, Task};
use crate::error::{CliError, Result};

pub const LOSS_FILE: &str = "loss.csv";
pub const FINAL_CHECKPOINT: &str = "model.fseg";

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    /// `(iteration, loss)` for every iteration run.
    pub losses: Vec<(u64, f32)>,
    pub final_checkpoint: PathBuf,
}

/// Writes the effective configuration into the output directory.
pub fn echo_config(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir).map_err(CliError::io(&cfg.out_dir))?;
    let p = cfg.out_dir.join("config.resolved");
    fs::write(&p, cfg.to_resolved()).map_err(CliError::io(&p))
}

pub fn loss_csv(losses: &[(u64, f32)]) -> String {
    let mut out = String::from("iteration,loss\n");
    for (it, l) in losses {
        out.push_str(&format!("{it},{l}\n"));
    }
    out
}

fn checkpoint_path(out_dir: &Path, iteration: u64) -> PathBuf {
    out_dir.join("checkpoints").join(format!("iter_{iteration:06}.fseg"))
}

/// Restores weights from `cfg.checkpoint` when given; returns the starting iteration.
fn warm_start(cfg: &RunConfig, params: &mut ParamRegistry<f32>) -> Result<u64> {
    match &cfg.checkpoint {
        Some(p) => {
            let ckpt = load_checkpoint(p, Some(&*params))?;
            ckpt.restore_into(params)?;
            Ok(ckpt.iteration)
        }
        None => Ok(0),
    }
}

fn non_finite(iteration: u64) -> impl FnOnce(Error) -> CliError {
    move |e| match e {
        Error::NonFinite { op } => CliError::NonFiniteLoss { iteration, detail: format!("first produced by {op}") },
        other => CliError::Core(other),
    }
}

/// Shared loop: `step` runs forward and backward for one batch of indices
/// and returns the loss with the parameter gradients.
fn run_loop<N, F>(
    cfg: &RunConfig,
    net: &mut N,
    params: fn(&mut N) -> &mut ParamRegistry<f32>,
    len: usize,
    mut step: F,
) -> Result<TrainSummary>
where
    F: FnMut(&mut N, &[usize]) -> bodyfuse::Result<(f32, Gradients<f32>)>,
{
    let start = warm_start(cfg, params(net))?;
    let mut state = SgdState::new(cfg.sgd(), params(net));
    state.iteration = start;
    let mut stream = BatchStream::new(len, cfg.batch_size, cfg.seed)?;
    let mut losses = Vec::with_capacity(cfg.total_iterations as usize);
    if cfg.checkpoint_every > 0 {
        let dir = cfg.out_dir.join("checkpoints");
        fs::create_dir_all(&dir).map_err(CliError::io(&dir))?;
    }
    for it in start..start + cfg.total_iterations {
        let idx = stream.next_batch();
        let (loss, grads) = step(net, &idx).map_err(non_finite(it))?;
        if !loss.is_finite() {
            return Err(CliError::NonFiniteLoss { iteration: it, detail: format!("loss = {loss}") });
        }
        sgd_step(params(net), &grads, &mut state).map_err(non_finite(it))?;
        losses.push((it, loss));
        let done = it + 1;
        if cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 {
            save_checkpoint(params(net), done, &checkpoint_path(&cfg.out_dir, done))?;
        }
    }
    let loss_path = cfg.out_dir.join(LOSS_FILE);
    fs::write(&loss_path, loss_csv(&losses)).map_err(CliError::io(&loss_path))?;
    let final_checkpoint = cfg.out_dir.join(FINAL_CHECKPOINT);
    save_checkpoint(params(net), state.iteration, &final_checkpoint)?;
    Ok(TrainSummary { losses, final_checkpoint })
}

pub fn train_seg(cfg: &RunConfig) -> Result<TrainSummary> {
    debug_assert_eq!(cfg.task, Task::Seg);
    cfg.validate()?;
    let data = Dataset::<f32>::load(cfg.manifest()?, Split::Train, Require::Masks, None)?;
    let mut net = SegNet::<f32>::build(SegNetConfig::preset(cfg.preset), cfg.seed)?;
    net.config.check_input(data.images[0].shape())?;
    echo_config(cfg)?;
    run_loop(cfg, &mut net, |n| &mut n.params, data.len(), |net, idx| {
        let x = data.image_batch(idx)?;
        let y = data.mask_batch(idx)?;
        let mut tape = Tape::new();
        let (out, vars) = net.forward_input(&mut tape, &x, Mode::Train)?;
        let loss = seg_loss(&mut tape, out.fused, &y)?;
        tape.backward(loss)?;
        Ok((tape.value(loss).item()?, vars.gradients(&mut tape)))
    })
}

pub fn train_cls(cfg: &RunConfig) -> Result<TrainSummary> {
    debug_assert_eq!(cfg.task, Task::Cls);
    cfg.validate()?;
    let data = Dataset::<f32>::load(cfg.manifest()?, Split::Train, Require::Labels, Some(cfg.class_count))?;
    let mut fc = FashionNetConfig::preset(cfg.preset);
    fc.class_count = cfg.class_count;
    let mut net = FashionNet::<f32>::build(fc, cfg.seed)?;
    net.check_input(data.images[0].shape())?;
    echo_config(cfg)?;
    let masked = cfg.mask_background;
    run_loop(cfg, &mut net, |n| &mut n.params, data.len(), |net, idx| {
        let x = if masked { data.masked_image_batch(idx)? } else { data.image_batch(idx)? };
        let labels = data.labels(idx);
        let mut tape = Tape::new();
        let (logits, vars) = net.forward_input(&mut tape, &x, Mode::Train)?;
        let loss = cls_loss(&mut tape, logits, &labels)?;
        tape.backward(loss)?;
        Ok((tape.value(loss).item()?, vars.gradients(&mut tape)))
    })
}

/// Moving averages over every full window of length `w`.
pub fn smooth(values: &[f64], w: usize) -> Vec<f64> {
    if w == 0 || values.len() < w {
        return Vec::new();
    }
    values.windows(w).map(|win| win.iter().sum::<f64>() / w as f64).collect()
}
