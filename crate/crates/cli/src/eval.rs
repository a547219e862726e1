//! Evaluation and prediction.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use bodyfuse::data::{apply_mask, encode_pgm, read_image, Dataset, ImageBuffer, Require};
use bodyfuse::fashionnet::predict_label;
use bodyfuse::metrics::{confusion, MetricReport};
use bodyfuse::nn::load_checkpoint;
use bodyfuse::segnet::batch_ious;
use bodyfuse::{FashionNet, FashionNetConfig, Mode, SegNet, SegNetConfig, Tape, Tensor};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub fn load_segnet(cfg: &RunConfig) -> Result<SegNet<f32>> {
    let mut net = SegNet::<f32>::build(SegNetConfig::preset(cfg.preset), cfg.seed)?;
    let ckpt = load_checkpoint(cfg.checkpoint()?, Some(&net.params))?;
    ckpt.restore_into(&mut net.params)?;
    Ok(net)
}

pub fn load_fashionnet(cfg: &RunConfig) -> Result<FashionNet<f32>> {
    let mut fc = FashionNetConfig::preset(cfg.preset);
    fc.class_count = cfg.class_count;
    let mut net = FashionNet::<f32>::build(fc, cfg.seed)?;
    let ckpt = load_checkpoint(cfg.checkpoint()?, Some(&net.params))?;
    ckpt.restore_into(&mut net.params)?;
    Ok(net)
}

fn write(path: PathBuf, text: &str) -> Result<()> {
    fs::write(&path, text).map_err(CliError::io(&path))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))
}

/// Per-image IoU of the configured split; writes `ious.csv` and `summary.csv`.
pub fn eval_seg(cfg: &RunConfig) -> Result<MetricReport> {
    cfg.validate()?;
    let data = Dataset::<f32>::load(cfg.manifest()?, cfg.split, Require::Masks, None)?;
    let mut net = load_segnet(cfg)?;
    net.config.check_input(data.images[0].shape())?;
    let mut ious = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        let pred = net.predict(&data.images[i], cfg.threshold)?;
        ious.extend(batch_ious(&pred.mask, &data.mask_batch(&[i])?)?);
    }
    let report = MetricReport::segmentation(ious)?;
    ensure_dir(&cfg.out_dir)?;
    let mut csv = String::from("image,iou\n");
    for (r, v) in data.records.iter().zip(&report.ious) {
        writeln!(csv, "{},{v}", r.image_path.display()).expect("String write");
    }
    write(cfg.out_dir.join("ious.csv"), &csv)?;
    let mean = report.mean_iou.expect("segmentation report");
    write(cfg.out_dir.join("summary.csv"), &format!("metric,value\nmean_iou,{mean}\nitems,{}\n", report.items))?;
    Ok(report)
}

fn cls_input(data: &Dataset<f32>, i: usize, masked: bool) -> Result<Tensor<f32>> {
    Ok(if masked { data.masked_image_batch(&[i])? } else { data.image_batch(&[i])? })
}

/// Accuracy and confusion matrices of the configured split.
pub fn eval_cls(cfg: &RunConfig) -> Result<MetricReport> {
    cfg.validate()?;
    let data = Dataset::<f32>::load(cfg.manifest()?, cfg.split, Require::Labels, Some(cfg.class_count))?;
    let mut net = load_fashionnet(cfg)?;
    net.check_input(data.images[0].shape())?;
    let mut predicted = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        predicted.extend(net.predict(&cls_input(&data, i, cfg.mask_background)?)?.labels);
    }
    let truth = data.labels(&(0..data.len()).collect::<Vec<_>>());
    let cm = confusion(&truth, &predicted, cfg.class_count)?;
    ensure_dir(&cfg.out_dir)?;
    let header = format!("true\\pred,{}\n", cm.labels.join(","));
    let mut raw = header.clone();
    let mut norm = header;
    for (t, (counts, fractions)) in cm.counts.iter().zip(cm.row_normalized()).enumerate() {
        let join = |v: Vec<String>| v.join(",");
        writeln!(raw, "{},{}", cm.labels[t], join(counts.iter().map(u64::to_string).collect())).expect("String write");
        writeln!(norm, "{},{}", cm.labels[t], join(fractions.iter().map(f64::to_string).collect())).expect("String write");
    }
    write(cfg.out_dir.join("confusion.csv"), &raw)?;
    write(cfg.out_dir.join("confusion_normalized.csv"), &norm)?;
    let report = MetricReport::classification(cm)?;
    let acc = report.accuracy.expect("classification report");
    write(cfg.out_dir.join("summary.csv"), &format!("metric,value\naccuracy,{acc}\nitems,{}\n", report.items))?;
    Ok(report)
}

/// One P5 mask per input under `out_dir/masks`, named after the input file.
pub fn predict_seg(cfg: &RunConfig, inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    if inputs.is_empty() {
        return Err(CliError::Usage("predict-seg needs at least one input image".into()));
    }
    let mut net = load_segnet(cfg)?;
    let dir = cfg.out_dir.join("masks");
    ensure_dir(&dir)?;
    let mut written = Vec::with_capacity(inputs.len());
    for path in inputs {
        let x = read_image::<f32>(path)?;
        let pred = net.predict(&x, cfg.threshold)?;
        let stem = path.file_stem().map_or("mask".into(), |s| s.to_string_lossy().into_owned());
        let out = dir.join(format!("{stem}.pgm"));
        fs::write(&out, encode_pgm(&ImageBuffer::from_mask(&pred.mask)?)?).map_err(CliError::io(&out))?;
        written.push(out);
    }
    Ok(written)
}

/// `(path, label, probability)` per input, in input order. Inputs with a
/// mask in `masks` (same position) are background-masked first.
pub fn predict_cls(cfg: &RunConfig, inputs: &[PathBuf], masks: &[Option<PathBuf>]) -> Result<Vec<(PathBuf, usize, f32)>> {
    if inputs.is_empty() {
        return Err(CliError::Usage("predict-cls needs at least one input image".into()));
    }
    let mut net = load_fashionnet(cfg)?;
    let mut out = Vec::with_capacity(inputs.len());
    for (i, path) in inputs.iter().enumerate() {
        let mut x = read_image::<f32>(path)?;
        if let Some(Some(m)) = masks.get(i) {
            x = apply_mask(&x, &bodyfuse::data::read_mask(m)?)?;
        }
        let mut tape = Tape::new();
        let (logits, _) = net.forward_input(&mut tape, &x, Mode::Infer)?;
        let pred = predict_label(tape.value(logits))?;
        let label = pred.labels[0];
        out.push((path.clone(), label, pred.probabilities.data()[label]));
    }
    let mut csv = String::from("path,label,probability\n");
    for (p, l, prob) in &out {
        writeln!(csv, "{},{l},{prob:.6}", p.display()).expect("String write");
    }
    ensure_dir(&cfg.out_dir)?;
    write(cfg.out_dir.join("predictions.csv"), &csv)?;
    Ok(out)
}
