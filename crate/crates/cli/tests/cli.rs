use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bodyfuse")).args(args).current_dir(dir).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["train-seg", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error: usage: "), "{}", stderr(&o));

    let o = run(dir.path(), &["train-seg", "--preset", "mini"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: usage: "), "{}", stderr(&o));
}

#[test]
fn failures_carry_a_kind() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("m.csv"), "a.ppm,a.pgm,-,train\n").unwrap();
    fs::write(dir.path().join("a.ppm"), b"P3\n1 1\n255\n0 0 0\n").unwrap();
    let o = run(dir.path(), &["train-seg", "--preset", "mini", "--manifest", "m.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: codec-magic: "), "{}", stderr(&o));

    fs::write(dir.path().join("bad.cfg"), "base_lr = fast\n").unwrap();
    let o = run(dir.path(), &["train-seg", "--config", "bad.cfg"]);
    assert!(stderr(&o).starts_with("error: config: "), "{}", stderr(&o));

    let o = run(dir.path(), &["eval-seg", "--preset", "mini", "--manifest", "m.csv", "--checkpoint", "none.fseg"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: "), "{}", stderr(&o));
}

#[test]
fn training_writes_loss_curve_and_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert!(run(p, &["synth-data", "seg", "--count", "4", "--height", "32", "--width", "32"]).status.success());
    let manifest = fs::read_to_string(p.join("data/manifest.csv")).unwrap();
    assert_eq!(manifest.lines().filter(|l| !l.starts_with('#')).count(), 4);

    fs::write(p.join("run.cfg"), "# seg run\npreset = mini\nbase_lr = 0.5\ntotal_iterations = 7\n").unwrap();
    let o = run(p, &["train-seg", "--config", "run.cfg", "--base-lr", "1e-5", "--manifest", "data/manifest.csv", "--checkpoint-every", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let loss = fs::read_to_string(p.join("out/loss.csv")).unwrap();
    let lines: Vec<&str> = loss.lines().collect();
    assert_eq!(lines[0], "iteration,loss");
    assert_eq!(lines.len(), 8);
    assert!(lines[1].starts_with("0,"));
    let resolved = fs::read_to_string(p.join("out/config.resolved")).unwrap();
    assert!(resolved.contains("base_lr = 0.00001"), "{resolved}");
    assert!(resolved.contains("total_iterations = 7"));
    assert!(p.join("out/checkpoints/iter_000006.fseg").exists());
    assert!(p.join("out/model.fseg").exists());

    // warm start continues the iteration count
    let o = run(p, &["train-seg", "--preset", "mini", "--manifest", "data/manifest.csv", "--checkpoint", "out/model.fseg", "--iterations", "2", "--out-dir", "more"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let loss = fs::read_to_string(p.join("more/loss.csv")).unwrap();
    assert!(loss.lines().nth(1).unwrap().starts_with("7,"), "{loss}");
}

#[test]
fn predict_cls_prints_one_line_per_input() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert!(run(p, &["synth-data", "cls", "--count", "4"]).status.success());
    let o = run(p, &["train-cls", "--preset", "mini", "--manifest", "data/manifest.csv", "--iterations", "2", "--batch-size", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(p, &["predict-cls", "--preset", "mini", "--checkpoint", "out/model.fseg", "data/images/0000.ppm", "data/images/0003.ppm"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<Vec<&str>> = out.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert_eq!(r.len(), 3);
        assert!(r[1].parse::<usize>().unwrap() < 4);
        let prob: f64 = r[2].parse().unwrap();
        assert!((0.25..=1.0).contains(&prob));
    }
    let o = run(p, &["predict-cls", "--preset", "mini", "--checkpoint", "out/model.fseg", "--mask", "data/masks/0000.pgm", "data/images/0000.ppm", "data/images/0001.ppm"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: usage: "));
}

#[test]
fn param_count_prints_totals() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["param-count", "cls"]);
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.contains("total weights: 12616384"), "{out}");
    assert!(out.lines().any(|l| l.starts_with("conv1") && l.ends_with("192 × 96 × 64")), "{out}");
}
