use std::path::PathBuf;
use std::process::ExitCode;

use bodyfuse::data::{SynthConfig, SynthKind};
use bodyfuse::Preset;
use bodyfuse_cli::config::{RunConfig, Task};
use bodyfuse_cli::{eval, tools, train, CliError, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bodyfuse", version, about = "Body segmentation and fashion-year classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// `key = value` config file; flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// full | mini
    #[arg(long)]
    preset: Option<String>,
    /// Override any config key, e.g. `--set threshold=0.4`
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct Hyper {
    #[arg(long)]
    base_lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    step_size: Option<u64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long)]
    checkpoint_every: Option<u64>,
    #[arg(long)]
    class_count: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the segmentation network
    TrainSeg {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        hyper: Hyper,
    },
    /// Train the fashion-year classifier
    TrainCls {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        hyper: Hyper,
    },
    /// Per-image IoU and mean IoU of a manifest split
    EvalSeg {
        #[command(flatten)]
        common: Common,
        /// train | test
        #[arg(long)]
        split: Option<String>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Accuracy and confusion matrix of a manifest split
    EvalCls {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        split: Option<String>,
        #[arg(long)]
        class_count: Option<usize>,
    },
    /// Write one P5 mask per input image
    PredictSeg {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Print `path,label,probability` per input image
    PredictCls {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        class_count: Option<usize>,
        /// Masks applied to the inputs, in the same order
        #[arg(long = "mask")]
        masks: Vec<PathBuf>,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Finite-difference gradient check of a mini network in f64
    Gradcheck {
        /// seg | cls
        task: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Coordinates per tensor (0 = every coordinate)
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Per-layer and total parameter counts
    ParamCount {
        /// seg | cls
        task: String,
        #[arg(long, default_value = "full")]
        preset: String,
    },
    /// Generate a synthetic dataset with a manifest
    SynthData {
        /// seg | cls
        kind: String,
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        test_count: usize,
        #[arg(long)]
        height: Option<usize>,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long, default_value_t = 4)]
        class_count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "data")]
        out_dir: PathBuf,
    },
}

fn kv(key: &str, v: impl ToString) -> (String, String) {
    (key.to_string(), v.to_string())
}

fn overrides(common: &Common, extra: Vec<(String, String)>) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for s in &common.set {
        let (k, v) = s.split_once('=').ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{s}`")))?;
        out.push(kv(k.trim(), v.trim()));
    }
    let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
    let named = [
        ("seed", common.seed.map(|s| s.to_string())),
        ("out_dir", path(&common.out_dir)),
        ("checkpoint", path(&common.checkpoint)),
        ("manifest", path(&common.manifest)),
        ("preset", common.preset.clone()),
    ];
    out.extend(named.into_iter().filter_map(|(k, v)| v.map(|v| kv(k, v))));
    out.extend(extra);
    Ok(out)
}

fn hyper_overrides(h: &Hyper) -> Vec<(String, String)> {
    let named = [
        ("base_lr", h.base_lr.map(|v| v.to_string())),
        ("momentum", h.momentum.map(|v| v.to_string())),
        ("weight_decay", h.weight_decay.map(|v| v.to_string())),
        ("step_size", h.step_size.map(|v| v.to_string())),
        ("gamma", h.gamma.map(|v| v.to_string())),
        ("batch_size", h.batch_size.map(|v| v.to_string())),
        ("total_iterations", h.iterations.map(|v| v.to_string())),
        ("checkpoint_every", h.checkpoint_every.map(|v| v.to_string())),
        ("class_count", h.class_count.map(|v| v.to_string())),
    ];
    named.into_iter().filter_map(|(k, v)| v.map(|v| kv(k, v))).collect()
}

fn opt(key: &str, v: Option<impl ToString>) -> Vec<(String, String)> {
    v.map(|v| kv(key, v)).into_iter().collect()
}

fn resolve(task: Task, common: &Common, extra: Vec<(String, String)>) -> Result<RunConfig> {
    RunConfig::resolve(task, common.config.as_deref(), &overrides(common, extra)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainSeg { common, hyper } => {
            let cfg = resolve(Task::Seg, &common, hyper_overrides(&hyper))?;
            let s = train::train_seg(&cfg)?;
            report_training(&s);
        }
        Command::TrainCls { common, hyper } => {
            let cfg = resolve(Task::Cls, &common, hyper_overrides(&hyper))?;
            let s = train::train_cls(&cfg)?;
            report_training(&s);
        }
        Command::EvalSeg { common, split, threshold } => {
            let mut extra = opt("split", split);
            extra.extend(opt("threshold", threshold));
            let r = eval::eval_seg(&resolve(Task::Seg, &common, extra)?)?;
            println!("mean IoU {} over {} images", r.mean_iou.unwrap_or(f64::NAN), r.items);
        }
        Command::EvalCls { common, split, class_count } => {
            let mut extra = opt("split", split);
            extra.extend(opt("class_count", class_count));
            let r = eval::eval_cls(&resolve(Task::Cls, &common, extra)?)?;
            println!("accuracy {} over {} images", r.accuracy.unwrap_or(f64::NAN), r.items);
        }
        Command::PredictSeg { common, threshold, inputs } => {
            let cfg = resolve(Task::Seg, &common, opt("threshold", threshold))?;
            for p in eval::predict_seg(&cfg, &inputs)? {
                println!("{}", p.display());
            }
        }
        Command::PredictCls { common, class_count, masks, inputs } => {
            if !masks.is_empty() && masks.len() != inputs.len() {
                return Err(CliError::Usage(format!("{} masks for {} inputs", masks.len(), inputs.len())));
            }
            let cfg = resolve(Task::Cls, &common, opt("class_count", class_count))?;
            let masks: Vec<Option<PathBuf>> = masks.into_iter().map(Some).collect();
            for (p, label, prob) in eval::predict_cls(&cfg, &inputs, &masks)? {
                println!("{},{label},{prob:.6}", p.display());
            }
        }
        Command::Gradcheck { task, seed, samples } => {
            let task: Task = task.parse()?;
            let defaults = RunConfig::defaults(task, Preset::Mini);
            let report = tools::gradcheck(task, seed.unwrap_or(defaults.seed), samples.unwrap_or(defaults.gradcheck_samples))?;
            print!("{}", tools::render_gradcheck(task, &report));
            tools::gradcheck_verdict(&report)?;
        }
        Command::ParamCount { task, preset } => {
            let task: Task = task.parse()?;
            let preset: Preset = preset.parse()?;
            print!("{}", tools::render_param_table(task, preset, &tools::param_table(task, preset)?));
        }
        Command::SynthData { kind, count, test_count, height, width, class_count, seed, out_dir } => {
            let kind: SynthKind = kind.parse()?;
            let (h, w) = match kind {
                SynthKind::Seg => (64, 64),
                SynthKind::Cls => (96, 48),
            };
            let config = SynthConfig {
                kind,
                count,
                test_count,
                height: height.unwrap_or(h),
                width: width.unwrap_or(w),
                class_count,
                seed,
            };
            println!("{}", tools::synth(&config, &out_dir)?.display());
        }
    }
    Ok(())
}

fn report_training(s: &train::TrainSummary) {
    if let Some((it, loss)) = s.losses.last() {
        println!("iteration {it}: loss {loss}");
    }
    println!("{}", s.final_checkpoint.display());
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.render().to_string();
            let text = text.strip_prefix("error: ").unwrap_or(&text);
            eprintln!("error: usage: {}", text.trim_end());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {e}", e.kind());
            ExitCode::FAILURE
        }
    }
}
