use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use msdnn::data::{read_mask, read_pnm, write_pgm};
use msdnn::metrics::{evaluate_dataset, GroundTruth, MetricsConfig, SaliencyMap};
use msdnn::Tensor;

fn msdnn(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msdnn"))
        .args(args)
        .current_dir(cwd)
        .env("MSDNN_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> Output {
    let out = msdnn(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed with {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(args: &[&str], cwd: &Path) -> (i32, String) {
    let out = msdnn(args, cwd);
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

/// Loss log rows without the wall-time column.
fn losses(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.rsplit_once(',').unwrap().0.to_owned())
        .collect()
}

fn csv_field(csv: &str, row: &str, col: &str) -> f64 {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == col).unwrap();
    let line = lines.find(|l| l.starts_with(&format!("{row},"))).unwrap();
    line.split(',').nth(i).unwrap().parse().unwrap()
}

const TINY: [&str; 6] = ["--size", "32", "--scale", "0.125", "--timesteps", "1"];

fn tiny_train(dir: &Path, extra: &[&str]) -> PathBuf {
    let out = dir.join("run");
    let mut args = vec!["train", "--synthetic", "3", "--iters", "4", "--seed", "5", "--checkpoint-every", "2"];
    if !extra.contains(&"--batch") {
        args.extend(["--batch", "2"]);
    }
    args.extend(TINY);
    args.extend(extra);
    args.extend(["--out", out.to_str().unwrap()]);
    ok(&args, dir);
    out
}

#[test]
fn train_writes_log_checkpoints_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let run = tiny_train(dir.path(), &[]);
    assert_eq!(losses(&run.join("loss.csv")).len(), 4);
    for f in ["config.json", "checkpoints/iter_000002.msdnn", "checkpoints/iter_000004.msdnn", "checkpoints/final.msdnn"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    let config = fs::read_to_string(run.join("config.json")).unwrap();
    assert!(config.contains("\"command\": \"train\"") && config.contains("\"input_size\": 32"));
}

#[test]
fn rerun_from_config_is_bitwise_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = tiny_train(dir.path(), &[]);
    let again = dir.path().join("again");
    ok(&["train", "--config", run.join("config.json").to_str().unwrap(), "--out", again.to_str().unwrap()], dir.path());
    assert_eq!(losses(&run.join("loss.csv")), losses(&again.join("loss.csv")));
    for f in ["iter_000002.msdnn", "final.msdnn"] {
        let a = fs::read(run.join("checkpoints").join(f)).unwrap();
        assert_eq!(a, fs::read(again.join("checkpoints").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn zero_learning_rate_gives_constant_loss() {
    let dir = tempfile::tempdir().unwrap();
    let run = tiny_train(dir.path(), &["--lr", "0", "--batch", "3"]);
    let rows = losses(&run.join("loss.csv"));
    let first: Vec<f64> = rows.iter().map(|r| r.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(first.iter().all(|l| (l - first[0]).abs() <= 1e-12 * first[0]), "{first:?}");
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(code(&["train", "--size", "32"], p).0, 2);
    assert_eq!(code(&["train", "--synthetic", "2", "--no-such-flag"], p).0, 2);
    assert_eq!(code(&["train", "--synthetic", "2", "--size", "30"], p).0, 2);
    assert_eq!(code(&["train", "--synthetic", "2", "--manifest", "m.tsv"], p).0, 2);
    assert_eq!(code(&["gradcheck", "--precision", "f32"], p).0, 2);
    assert_eq!(code(&["gradcheck", "--kernels", "conv3d"], p).0, 2);
    assert_eq!(code(&["frobnicate"], p).0, 2);
    let out = Command::new(env!("CARGO_BIN_EXE_msdnn"))
        .args(["gradcheck", "--kernels", "relu"])
        .env("MSDNN_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gradcheck_filter_runs_only_rcl() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["gradcheck", "--kernels", "rcl", "--out", "gc"], dir.path());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 3);
    assert!(stdout.lines().all(|l| l.starts_with("rcl T=") && l.contains("PASS")), "{stdout}");
    assert_eq!(fs::read_to_string(dir.path().join("gc/gradcheck.csv")).unwrap().lines().count(), 4);
}

#[test]
fn gradcheck_full_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["gradcheck"], dir.path());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 12);
    assert!(stdout.contains("network"));
}

fn synth(dir: &Path, count: &str, size: &str, seed: &str) -> PathBuf {
    ok(&["synth", "--count", count, "--size", size, "--seed", seed, "--out", "data"], dir);
    dir.join("data")
}

#[test]
fn predict_writes_final_and_scale_maps() {
    let dir = tempfile::tempdir().unwrap();
    let run = tiny_train(dir.path(), &[]);
    let data = synth(dir.path(), "2", "48", "1");
    let ckpt = run.join("checkpoints/final.msdnn");
    ok(&["predict", "--checkpoint", ckpt.to_str().unwrap(), "--input", "data/images", "--all-scales", "--out", "pred"], dir.path());
    let pred = dir.path().join("pred");
    let pgms: Vec<_> = fs::read_dir(&pred).unwrap().filter_map(|e| e.ok()).filter(|e| e.path().extension().is_some_and(|x| x == "pgm")).collect();
    assert_eq!(pgms.len(), 10);
    // maps come back at the input resolution
    let m = read_pnm(pred.join("synth_0000.pgm")).unwrap();
    assert_eq!(m.shape(), [1, 48, 48]);
    assert!(data.join("manifest.tsv").is_file());
}

#[test]
fn corrupt_checkpoint_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let run = tiny_train(dir.path(), &[]);
    synth(dir.path(), "1", "32", "1");
    let ckpt = run.join("checkpoints/final.msdnn");
    let bytes = fs::read(&ckpt).unwrap();
    fs::write(&ckpt, &bytes[..bytes.len() - 9]).unwrap();
    let (c, err) = code(&["predict", "--checkpoint", ckpt.to_str().unwrap(), "--input", "data/images"], dir.path());
    assert_eq!(c, 1);
    assert!(err.contains("fcm.conv3"), "{err}");
}

#[test]
fn eval_of_ground_truth_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "4", "32", "2");
    ok(&["eval", "--pred", "data/masks", "--manifest", "data/manifest.tsv", "--svg", "--out", "ev"], dir.path());
    let csv = fs::read_to_string(dir.path().join("ev/metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
    assert_eq!(csv_field(&csv, "MEAN", "fmeasure"), 1.0);
    assert_eq!(csv_field(&csv, "MEAN", "mae"), 0.0);
    assert_eq!(csv_field(&csv, "MEAN", "auc"), 1.0);
    assert_eq!(fs::read_to_string(dir.path().join("ev/pr_curve.csv")).unwrap().lines().count(), 53);
    assert!(fs::read_to_string(dir.path().join("ev/pr_curve.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn eval_of_constant_maps_has_chance_auc() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "3", "32", "3");
    fs::create_dir(dir.path().join("flat")).unwrap();
    for i in 0..3 {
        write_pgm(&Tensor::new(&[1, 32, 32], 0.5).unwrap(), dir.path().join(format!("flat/synth_{i:04}.pgm"))).unwrap();
    }
    ok(&["eval", "--pred", "flat", "--gt", data.join("masks").to_str().unwrap(), "--out", "ev"], dir.path());
    let csv = fs::read_to_string(dir.path().join("ev/metrics.csv")).unwrap();
    assert_eq!(csv_field(&csv, "MEAN", "auc"), 0.5);
}

#[test]
fn eval_matches_metrics_module() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "5", "16", "4");
    let preds = dir.path().join("preds");
    fs::create_dir(&preds).unwrap();
    let mut maps = Vec::new();
    let mut gts = Vec::new();
    for i in 0..5u64 {
        let id = format!("synth_{i:04}");
        let values = (0..256).map(|k| ((k as u64 * 37 + i * 11) % 256) as f64 / 255.0).collect();
        write_pgm(&Tensor::from_vec(&[1, 16, 16], values).unwrap(), preds.join(format!("{id}.pgm"))).unwrap();
        let back = read_pnm(preds.join(format!("{id}.pgm"))).unwrap().into_reshaped(&[16, 16]).unwrap();
        maps.push(SaliencyMap::new(&back, id.clone()).unwrap());
        gts.push(GroundTruth::new(&read_mask(data.join(format!("masks/{id}.pgm"))).unwrap(), id).unwrap());
    }
    ok(&["eval", "--pred", "preds", "--manifest", "data/manifest.tsv", "--out", "ev"], dir.path());
    let report = evaluate_dataset(&maps, &gts, &MetricsConfig::default()).unwrap();
    assert_eq!(fs::read_to_string(dir.path().join("ev/metrics.csv")).unwrap(), report.to_csv());
    assert_eq!(fs::read_to_string(dir.path().join("ev/pr_curve.csv")).unwrap(), report.pr_curve_csv());
}

#[test]
fn eval_lists_unpaired_ids() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "3", "32", "5");
    fs::create_dir(dir.path().join("partial")).unwrap();
    fs::copy(dir.path().join("data/masks/synth_0001.pgm"), dir.path().join("partial/synth_0001.pgm")).unwrap();
    let (c, err) = code(&["eval", "--pred", "partial", "--manifest", "data/manifest.tsv"], dir.path());
    assert_eq!(c, 1);
    assert!(err.contains("synth_0000") && err.contains("synth_0002") && !err.contains("synth_0001"), "{err}");
}

#[test]
fn ablate_writes_four_rows_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["ablate", "--synthetic", "4", "--eval-synthetic", "2", "--iters", "3", "--batch", "4", "--seed", "1"];
    args.extend(TINY);
    let run = |out: &str| {
        let mut a = args.clone();
        a.extend(["--out", out]);
        ok(&a, dir.path());
        fs::read_to_string(dir.path().join(out).join("ablation.csv")).unwrap()
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(a, b);
    let rows: Vec<&str> = a.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(rows, ["Sm4", "Sm43", "Sm432", "Sm4321"]);
    assert!(dir.path().join("a/config.json").is_file());
}

/// The desk-scale overfit run, at the calibrated iteration count.
#[test]
fn overfit_then_predict_training_images() {
    overfit_run("500");
}

/// The same run at the full 2000-iteration bound (about 8 minutes).
#[test]
#[ignore]
fn overfit_full_bound() {
    overfit_run("2000");
}

fn overfit_run(iters: &str) {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&["train", "--synthetic", "8", "--size", "64", "--scale", "0.25", "--timesteps", "2", "--iters", iters, "--seed", "7", "--out", "run"], p);
    let rows = losses(&p.join("run/loss.csv"));
    assert_eq!(rows.len(), iters.parse::<usize>().unwrap());
    let final_loss: f64 = rows.last().unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert!(final_loss < 0.05, "final loss {final_loss}");

    synth(p, "8", "64", "7");
    ok(&["predict", "--checkpoint", "run/checkpoints/final.msdnn", "--input", "data/images", "--out", "pred"], p);
    ok(&["eval", "--pred", "pred", "--manifest", "data/manifest.tsv", "--out", "ev"], p);
    let csv = fs::read_to_string(p.join("ev/metrics.csv")).unwrap();
    for i in 0..8 {
        let f = csv_field(&csv, &format!("synth_{i:04}"), "fmeasure");
        assert!(f > 0.95, "synth_{i:04}: F {f}\n{csv}");
    }
}
