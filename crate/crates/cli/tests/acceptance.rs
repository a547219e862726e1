//! Runs the ten primary acceptance criteria and prints one line per criterion.
//!
//! Criteria listed in `KNOWN_FAILURES` are reported as FAIL without failing
//! the process; any other failure exits non-zero.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use bodyfuse::data::{gen_synthetic, Split, SynthConfig};
use bodyfuse::metrics::{accuracy, confusion, iou};
use bodyfuse::nn::lr_at;
use bodyfuse::ops::sigmoid_bce_loss;
use bodyfuse::{FashionNetConfig, Mode, Preset, SegNet32, SegNetConfig, Tape, Tensor};
use bodyfuse_cli::config::{RunConfig, Task};
use bodyfuse_cli::train::smooth;
use bodyfuse_cli::{eval, tools, train, CliError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria that cannot be met as stated; see the README.
const KNOWN_FAILURES: &[u32] = &[6];

/// Classifier coordinates checked per tensor; small tensors are checked in full.
const CLS_GRADCHECK_SAMPLES: usize = 256;

struct Outcome {
    pass: bool,
    detail: String,
    /// Extra context printed under the verdict line.
    info: Option<String>,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into(), info: None }
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let seg = tools::gradcheck(Task::Seg, 0, 0).expect("seg gradcheck runs");
    let cls = tools::gradcheck(Task::Cls, 0, CLS_GRADCHECK_SAMPLES).expect("cls gradcheck runs");
    let elapsed = start.elapsed();
    let pass = seg.passed() && cls.passed() && elapsed < Duration::from_secs(120);
    outcome(
        pass,
        format!(
            "seg {} coords max {:.2e}; cls {} coords max {:.2e}; {:.1}s",
            seg.checked(),
            seg.max_rel_error(),
            cls.checked(),
            cls.max_rel_error(),
            elapsed.as_secs_f64()
        ),
    )
}

fn shape_conformance() -> Outcome {
    let start = Instant::now();
    let table = [
        "192 × 96 × 64",
        "96 × 48 × 64",
        "96 × 48 × 128",
        "48 × 24 × 128",
        "48 × 24 × 256",
        "24 × 12 × 256",
        "24 × 12 × 384",
        "12 × 6 × 384",
        "12 × 6 × 512",
        "256",
        "8",
    ];
    let trace = FashionNetConfig::full().shape_trace().expect("full preset traces");
    let got: Vec<String> = trace.iter().map(|l| l.output_label()).collect();
    let matching = got.iter().zip(table).filter(|(g, t)| g.as_str() == *t).count();
    let elapsed = start.elapsed();
    let pass = got.len() == table.len() && matching == table.len() && elapsed < Duration::from_secs(1);
    outcome(pass, format!("{matching}/{} rows match in {:.1}ms", table.len(), elapsed.as_secs_f64() * 1e3))
}

fn architecture_conformance() -> Outcome {
    let mut net = SegNet32::build(SegNetConfig::full(), 0).expect("full segnet builds");
    let a = net.architecture();
    let counts = (a.encoder_convs, a.pools, a.decoder_convs, a.side_branches, a.fusion_convs);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = Tensor::from_fn(&[1, 3, 32, 32], |_| rng.random_range(0.0..1.0)).expect("input");
    let mut tape = Tape::new();
    let (out, _) = net.forward_input(&mut tape, &x, Mode::Infer).expect("forward");
    let shape = tape.value(out.fused).shape().to_vec();
    let pass = counts == (13, 5, 13, 4, 1) && shape == [1, 1, 32, 32];
    outcome(
        pass,
        format!(
            "enc {} pools {} dec {} side {} fuse {}; 32×32 input → {}×{} output",
            counts.0, counts.1, counts.2, counts.3, counts.4, shape[2], shape[3]
        ),
    )
}

fn loss_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let f: f64 = rng.random_range(-10.0..10.0);
        let y = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
        let p = 1.0 / (1.0 + (-f).exp());
        let literal = -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
        let t = |v| Tensor::from_vec(&[1, 1, 1, 1], vec![v]).expect("scalar map");
        let got = sigmoid_bce_loss(&t(f), &t(y)).expect("loss");
        worst = worst.max((got - literal).abs());
    }
    outcome(worst < 1e-10, format!("max |diff| {worst:.2e} over 100 pairs"))
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..=256);
        let a: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        let b: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        let inter = (0..n).filter(|&i| a[i] && b[i]).count();
        let union = (0..n).filter(|&i| a[i] || b[i]).count();
        let want = if union == 0 { 1.0 } else { inter as f64 / union as f64 };
        worst = worst.max((iou(&a, &b).expect("iou") - want).abs());
    }
    for _ in 0..1000 {
        let k = rng.random_range(2..=8);
        let n = rng.random_range(1..=128);
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let hits = truth.iter().zip(&pred).filter(|(t, p)| t == p).count();
        let acc = accuracy(&confusion(&truth, &pred, k).expect("confusion")).expect("accuracy");
        worst = worst.max((acc - hits as f64 / n as f64).abs());
    }
    outcome(worst < 1e-12, format!("max |diff| {worst:.2e} over 1000 IoU and 1000 accuracy instances"))
}

fn seg_config(dir: &Path, manifest: PathBuf, lr: f64) -> RunConfig {
    let mut cfg = RunConfig::defaults(Task::Seg, Preset::Mini);
    cfg.manifest = Some(manifest);
    cfg.out_dir = dir.to_path_buf();
    cfg.base_lr = lr;
    cfg.batch_size = 2;
    cfg.total_iterations = 500;
    cfg.checkpoint_every = 0;
    cfg
}

/// Trains and evaluates on the training split; returns mean IoU, the number
/// of increases in the window-50 smoothed loss, and the runtime.
fn seg_overfit_run(dir: &Path, manifest: &Path, lr: f64) -> Result<(f64, usize, Duration), CliError> {
    let start = Instant::now();
    let mut cfg = seg_config(dir, manifest.to_path_buf(), lr);
    let summary = train::train_seg(&cfg)?;
    let elapsed = start.elapsed();
    cfg.checkpoint = Some(summary.final_checkpoint.clone());
    cfg.split = Split::Train;
    let report = eval::eval_seg(&cfg)?;
    let losses: Vec<f64> = summary.losses.iter().map(|&(_, l)| l as f64).collect();
    let smoothed = smooth(&losses, 50);
    let rises = smoothed.windows(2).filter(|w| w[1] > w[0]).count();
    Ok((report.mean_iou.unwrap_or(0.0), rises, elapsed))
}

fn seg_overfit(root: &Path) -> Outcome {
    let data = root.join("seg-data");
    let manifest = gen_synthetic(&SynthConfig::seg(8, 64, 64, 0), &data).expect("synthetic data");
    let mut verdict = match seg_overfit_run(&root.join("seg-1e-3"), &manifest, 1e-3) {
        Ok((m, rises, t)) => outcome(
            m >= 0.95 && rises == 0 && t < Duration::from_secs(300),
            format!("lr 1e-3: mean IoU {m:.4}, {rises} rises in smoothed loss, {:.1}s", t.as_secs_f64()),
        ),
        Err(e) => outcome(false, format!("lr 1e-3: {}: {e}", e.kind())),
    };
    verdict.info = Some(match seg_overfit_run(&root.join("seg-1e-5"), &manifest, 1e-5) {
        Ok((m, rises, t)) => format!(
            "same run at the recipe lr 1e-5: mean IoU {m:.4}, {rises} rises in smoothed loss, {:.1}s",
            t.as_secs_f64()
        ),
        Err(e) => format!("same run at the recipe lr 1e-5: {}: {e}", e.kind()),
    });
    verdict
}

fn cls_overfit(root: &Path) -> Outcome {
    let data = root.join("cls-data");
    let manifest = gen_synthetic(&SynthConfig::cls(40, 96, 48, 4, 0), &data).expect("synthetic data");
    let start = Instant::now();
    let mut cfg = RunConfig::defaults(Task::Cls, Preset::Mini);
    cfg.manifest = Some(manifest);
    cfg.out_dir = root.join("cls-run");
    cfg.class_count = 4;
    cfg.batch_size = 8;
    cfg.total_iterations = 300;
    cfg.checkpoint_every = 0;
    let result = train::train_cls(&cfg).and_then(|s| {
        cfg.checkpoint = Some(s.final_checkpoint);
        cfg.split = Split::Train;
        eval::eval_cls(&cfg)
    });
    let elapsed = start.elapsed();
    match result {
        Ok(r) => {
            let acc = r.accuracy.unwrap_or(0.0);
            outcome(
                acc == 1.0 && elapsed < Duration::from_secs(300),
                format!("training accuracy {acc:.4} on {} images, {:.1}s", r.items, elapsed.as_secs_f64()),
            )
        }
        Err(e) => outcome(false, format!("{}: {e}", e.kind())),
    }
}

fn recipe_fidelity() -> Outcome {
    let seg = RunConfig::defaults(Task::Seg, Preset::Full);
    let cls = RunConfig::defaults(Task::Cls, Preset::Full);
    let schedule: Vec<f64> = [0, 10_000, 25_000].iter().map(|&i| lr_at(i, seg.base_lr, seg.step_size, seg.gamma)).collect();
    let same = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs();
    let lr_ok = schedule.iter().zip([1e-5, 1e-6, 1e-7]).all(|(&a, b)| same(a, b));
    let defaults_ok = (seg.momentum, seg.weight_decay, seg.batch_size, seg.total_iterations) == (0.9, 0.0005, 2, 40_000)
        && (cls.momentum, cls.weight_decay, cls.batch_size, cls.total_iterations) == (0.9, 0.001, 64, 20_000);
    outcome(
        lr_ok && defaults_ok,
        format!(
            "lr {:e}, {:e}, {:e} at 0/10000/25000; seg m {} wd {} batch {} iters {}; cls m {} wd {} batch {} iters {}",
            schedule[0],
            schedule[1],
            schedule[2],
            seg.momentum,
            seg.weight_decay,
            seg.batch_size,
            seg.total_iterations,
            cls.momentum,
            cls.weight_decay,
            cls.batch_size,
            cls.total_iterations
        ),
    )
}

fn parameter_accounting() -> Outcome {
    let table = tools::param_table(Task::Cls, Preset::Full).expect("param table");
    let text = tools::render_param_table(Task::Cls, Preset::Full, &table);
    let weights = table.total_weights();
    let noted = text.lines().any(|l| l.starts_with("note:") && l.contains("AlexNet") && l.contains("1/17"));
    outcome(weights == 12_616_384 && noted, format!("{weights} weights; comparison note present: {noted}"))
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bodyfuse"))
}

/// Every command of the CLI, run inside `dir` with relative paths.
fn run_all_commands(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let steps: &[(&str, &[&str])] = &[
        ("synth-seg", &["synth-data", "seg", "--count", "4", "--test-count", "2", "--height", "32", "--width", "32", "--seed", "5", "--out-dir", "sdata"]),
        ("synth-cls", &["synth-data", "cls", "--count", "8", "--test-count", "4", "--seed", "5", "--out-dir", "cdata"]),
        ("train-seg", &["train-seg", "--preset", "mini", "--manifest", "sdata/manifest.csv", "--out-dir", "seg", "--iterations", "12", "--checkpoint-every", "5", "--seed", "3"]),
        ("eval-seg", &["eval-seg", "--preset", "mini", "--manifest", "sdata/manifest.csv", "--checkpoint", "seg/model.fseg", "--out-dir", "seg-eval", "--split", "test"]),
        ("predict-seg", &["predict-seg", "--preset", "mini", "--checkpoint", "seg/model.fseg", "--out-dir", "seg-pred", "sdata/images/0000.ppm", "sdata/images/0005.ppm"]),
        ("train-cls", &["train-cls", "--preset", "mini", "--manifest", "cdata/manifest.csv", "--out-dir", "cls", "--iterations", "6", "--batch-size", "4", "--checkpoint-every", "3", "--seed", "3"]),
        ("eval-cls", &["eval-cls", "--preset", "mini", "--manifest", "cdata/manifest.csv", "--checkpoint", "cls/model.fseg", "--out-dir", "cls-eval", "--split", "test"]),
        ("predict-cls", &["predict-cls", "--preset", "mini", "--checkpoint", "cls/model.fseg", "--out-dir", "cls-pred", "--mask", "cdata/masks/0001.pgm", "--mask", "cdata/masks/0002.pgm", "cdata/images/0001.ppm", "cdata/images/0002.ppm"]),
        ("gradcheck", &["gradcheck", "seg", "--seed", "2", "--samples", "4"]),
        ("param-count", &["param-count", "cls"]),
    ];
    let mut artifacts = BTreeMap::new();
    for (name, args) in steps {
        let out = bin().args(*args).current_dir(dir).output().map_err(|e| format!("{name}: {e}"))?;
        if !out.status.success() {
            return Err(format!("{name} failed: {}", String::from_utf8_lossy(&out.stderr).trim()));
        }
        artifacts.insert(format!("stdout of {name}"), out.stdout);
    }
    collect_files(dir, dir, &mut artifacts).map_err(|e| e.to_string())?;
    Ok(artifacts)
}

fn collect_files(root: &Path, dir: &Path, into: &mut BTreeMap<String, Vec<u8>>) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, into)?;
        } else {
            let rel = path.strip_prefix(root).expect("under root").display().to_string();
            into.insert(rel, fs::read(&path)?);
        }
    }
    Ok(())
}

fn reproducibility(root: &Path) -> Outcome {
    let (a, b) = (root.join("repro-a"), root.join("repro-b"));
    for d in [&a, &b] {
        fs::create_dir_all(d).expect("run directory");
    }
    let (first, second) = match (run_all_commands(&a), run_all_commands(&b)) {
        (Ok(x), Ok(y)) => (x, y),
        (Err(e), _) | (_, Err(e)) => return outcome(false, e),
    };
    let differing: Vec<&String> = first.keys().filter(|k| first.get(*k) != second.get(*k)).collect();
    let missing = second.keys().filter(|k| !first.contains_key(*k)).count();
    let kinds = ["fseg", "csv", "pgm"].map(|ext| first.keys().filter(|k| k.ends_with(ext)).count());
    outcome(
        differing.is_empty() && missing == 0,
        format!(
            "{} artifacts ({} checkpoints, {} CSVs, {} masks) compared, {} differ",
            first.len(),
            kinds[0],
            kinds[1],
            kinds[2],
            differing.len() + missing
        ),
    )
}

fn main() -> ExitCode {
    let root = tempfile::tempdir().expect("scratch directory");
    let criteria: Vec<(u32, &str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        (1, "gradient correctness", Box::new(gradient_correctness)),
        (2, "shape conformance", Box::new(shape_conformance)),
        (3, "architecture conformance", Box::new(architecture_conformance)),
        (4, "loss-formula oracle", Box::new(loss_oracle)),
        (5, "metric oracles", Box::new(metric_oracles)),
        (6, "seg overfit", Box::new(|| seg_overfit(root.path()))),
        (7, "cls overfit", Box::new(|| cls_overfit(root.path()))),
        (8, "recipe fidelity", Box::new(recipe_fidelity)),
        (9, "parameter accounting", Box::new(parameter_accounting)),
        (10, "reproducibility", Box::new(|| reproducibility(root.path()))),
    ];
    let mut passed = 0;
    let mut unexpected = Vec::new();
    for (id, name, run) in &criteria {
        let o = run();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("[{verdict}] {id:>2} {name}: {}", o.detail);
        if let Some(info) = &o.info {
            println!("          {info}");
        }
        if o.pass {
            passed += 1;
        } else if !KNOWN_FAILURES.contains(id) {
            unexpected.push(*id);
        }
    }
    println!("acceptance: {passed}/{} criteria pass", criteria.len());
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("acceptance: unexpected failures {unexpected:?}");
        ExitCode::FAILURE
    }
}
