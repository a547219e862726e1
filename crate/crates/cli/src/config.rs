//! Run configuration: defaults per task, `key = value` files and flag overrides.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use bodyfuse::data::Split;
use bodyfuse::{Preset, SgdConfig};

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Seg,
    Cls,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Seg => "seg",
            Task::Cls => "cls",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seg" => Ok(Task::Seg),
            "cls" => Ok(Task::Cls),
            other => Err(CliError::Usage(format!("unknown task `{other}` (expected seg or cls)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub task: Task,
    pub preset: Preset,
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub step_size: u64,
    pub gamma: f64,
    pub batch_size: usize,
    pub total_iterations: u64,
    pub seed: u64,
    pub manifest: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub checkpoint_every: u64,
    pub class_count: usize,
    pub threshold: f64,
    pub split: Split,
    /// Zero the background of classifier inputs that have masks.
    pub mask_background: bool,
    /// Coordinates checked per parameter tensor by `gradcheck`; 0 checks all.
    pub gradcheck_samples: usize,
}

/// Keys accepted in config files and as overrides, in echo order.
pub const KEYS: &[&str] = &[
    "task",
    "preset",
    "base_lr",
    "momentum",
    "weight_decay",
    "step_size",
    "gamma",
    "batch_size",
    "total_iterations",
    "seed",
    "manifest",
    "out_dir",
    "checkpoint",
    "checkpoint_every",
    "class_count",
    "threshold",
    "split",
    "mask_background",
    "gradcheck_samples",
];

impl RunConfig {
    /// Training recipe defaults for `task` at `preset`.
    pub fn defaults(task: Task, preset: Preset) -> Self {
        let (base_lr, weight_decay, step_size, gamma, batch_size, total_iterations) = match task {
            Task::Seg => (1e-5, 0.0005, 10_000, 0.1, 2, 40_000),
            Task::Cls => (1e-3, 0.001, 0, 1.0, 64, 20_000),
        };
        Self {
            task,
            preset,
            base_lr,
            momentum: 0.9,
            weight_decay,
            step_size,
            gamma,
            batch_size,
            total_iterations,
            seed: 0,
            manifest: None,
            out_dir: PathBuf::from("out"),
            checkpoint: None,
            checkpoint_every: 1000,
            class_count: match preset {
                Preset::Full => 8,
                Preset::Mini => 4,
            },
            threshold: 0.5,
            split: Split::Test,
            mask_background: true,
            gradcheck_samples: 32,
        }
    }

    /// Builds a config from defaults, then the config file's entries, then `overrides`.
    pub fn resolve(task: Task, file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut entries = match file {
            Some(p) => parse_config(&std::fs::read_to_string(p).map_err(CliError::io(p))?)?,
            None => Vec::new(),
        };
        entries.extend(overrides.iter().cloned());
        // the preset decides some defaults, so it is applied first
        let preset = match entries.iter().rev().find(|(k, _)| k == "preset") {
            Some((_, v)) => v.parse().map_err(|e: bodyfuse::Error| CliError::Config(e.to_string()))?,
            None => Preset::Full,
        };
        let mut cfg = Self::defaults(task, preset);
        for (k, v) in &entries {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| CliError::Config(format!("`{key}`: cannot parse `{v}`")))
        }
        match key {
            "task" => {
                let t: Task = value.parse()?;
                if t != self.task {
                    return Err(CliError::Config(format!("config is for task {}, command runs {}", t.name(), self.task.name())));
                }
            }
            "preset" => self.preset = value.parse().map_err(|e: bodyfuse::Error| CliError::Config(e.to_string()))?,
            "base_lr" => self.base_lr = num(key, value)?,
            "momentum" => self.momentum = num(key, value)?,
            "weight_decay" => self.weight_decay = num(key, value)?,
            "step_size" => self.step_size = num(key, value)?,
            "gamma" => self.gamma = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "total_iterations" => self.total_iterations = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "manifest" => self.manifest = Some(value.into()),
            "out_dir" => self.out_dir = value.into(),
            "checkpoint" => self.checkpoint = Some(value.into()),
            "checkpoint_every" => self.checkpoint_every = num(key, value)?,
            "class_count" => self.class_count = num(key, value)?,
            "threshold" => self.threshold = num(key, value)?,
            "split" => self.split = value.parse().map_err(CliError::Config)?,
            "mask_background" => self.mask_background = num(key, value)?,
            "gradcheck_samples" => self.gradcheck_samples = num(key, value)?,
            other => return Err(CliError::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return bad("base_lr must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        if !(self.weight_decay >= 0.0) || !(self.gamma > 0.0) {
            return bad("weight_decay must be non-negative and gamma positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.class_count < 2 {
            return bad("class_count must be at least 2");
        }
        if !(0.0..1.0).contains(&self.threshold) {
            return bad("threshold must be in [0, 1)");
        }
        Ok(())
    }

    pub fn sgd(&self) -> SgdConfig {
        SgdConfig {
            base_lr: self.base_lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            step_size: self.step_size,
            gamma: self.gamma,
        }
    }

    pub fn manifest(&self) -> Result<&Path> {
        self.manifest.as_deref().ok_or_else(|| CliError::Usage("--manifest is required".into()))
    }

    pub fn checkpoint(&self) -> Result<&Path> {
        self.checkpoint.as_deref().ok_or_else(|| CliError::Usage("--checkpoint is required".into()))
    }

    /// Every key in [`KEYS`] order as `key = value` lines; absent paths are `-`.
    pub fn to_resolved(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map_or("-".to_string(), |p| p.display().to_string());
        let values = [
            self.task.name().to_string(),
            self.preset.name().to_string(),
            self.base_lr.to_string(),
            self.momentum.to_string(),
            self.weight_decay.to_string(),
            self.step_size.to_string(),
            self.gamma.to_string(),
            self.batch_size.to_string(),
            self.total_iterations.to_string(),
            self.seed.to_string(),
            path(&self.manifest),
            self.out_dir.display().to_string(),
            path(&self.checkpoint),
            self.checkpoint_every.to_string(),
            self.class_count.to_string(),
            self.threshold.to_string(),
            self.split.to_string(),
            self.mask_background.to_string(),
            self.gradcheck_samples.to_string(),
        ];
        let mut out = String::new();
        for (k, v) in KEYS.iter().zip(values) {
            writeln!(out, "{k} = {v}").expect("writing to a String");
        }
        out
    }
}

/// Parses `key = value` lines; `#` starts a comment line, blank lines are skipped.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Config(format!("line {}: expected `key = value`", i + 1)));
        };
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(CliError::Config(format!("line {}: unknown key `{k}`", i + 1)));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}
