//! End-to-end checks of the `bpn` binary: exit codes, run artifacts,
//! sweep resumability, and eval determinism.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bpn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bpn"))
        .args(args)
        .output()
        .expect("spawning bpn")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const MINI: &[&str] = &[
    "--iterations", "2", "--episodes", "2", "--steps", "4", "--epochs", "2", "--batch", "4",
];

/// Minimal train run; `extra` may add flags but must not repeat MINI's.
fn train_mini(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train"];
    args.extend_from_slice(MINI);
    if !extra.contains(&"--nodes") {
        args.extend_from_slice(&["--nodes", "8"]);
    }
    args.extend_from_slice(extra);
    args.push("--out");
    let out_str = dir.to_str().unwrap();
    args.push(out_str);
    let out = bpn(&args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "train_mini failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn usage_error_exits_2() {
    let out = bpn(&["train", "--env", "nope", "--bogus-flag"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_error_exits_3() {
    let out = bpn(&["eval", "/nonexistent/checkpoint.bpn1"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));

    // invalid env value is caught at resolution time
    let out = bpn(&["train", "--env", "flying"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn train_writes_run_artifacts() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("run");
    let out = train_mini(&dir, &[]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    for f in ["manifest.txt", "curves.csv", "timings.csv", "latest.bpn1", "best.bpn1", "COMPLETE"] {
        assert!(dir.join(f).exists(), "missing {f}");
    }
    let manifest = std::fs::read_to_string(dir.join("manifest.txt")).unwrap();
    for key in [
        "run_id", "env", "algo", "alpha", "beta", "gamma", "epochs", "batch", "iterations",
        "episodes", "steps", "retain", "seed", "lr", "nodes", "network", "out", "format_version",
    ] {
        assert!(manifest.contains(&format!("{key} = ")), "manifest missing {key}");
    }
    let curves = std::fs::read_to_string(dir.join("curves.csv")).unwrap();
    assert!(curves.starts_with("iteration,episode,total_reward,mean_loss\n"));
    // 2 iterations × 2 episodes of data rows
    assert_eq!(curves.lines().count(), 1 + 4);
}

#[test]
fn all_algorithms_run_and_eval() {
    let tmp = TempDir::new().unwrap();
    for algo in ["bpn", "bqn", "cvi-float"] {
        let dir = tmp.path().join(algo);
        let out = train_mini(&dir, &["--algo", algo]);
        assert_eq!(out.status.code(), Some(0), "{algo}: {}", String::from_utf8_lossy(&out.stderr));
        let ckpt = dir.join("latest.bpn1");
        let out = bpn(&["eval", ckpt.to_str().unwrap(), "--episodes", "2", "--seed", "1"]);
        assert_eq!(out.status.code(), Some(0), "{algo} eval: {}", String::from_utf8_lossy(&out.stderr));
        assert!(stdout(&out).contains("mean_total_reward"));
    }
}

#[test]
fn eval_is_deterministic_and_dumps_frames() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("run");
    train_mini(&dir, &["--env", "tracking"]);
    let ckpt = dir.join("best.bpn1");
    let a = bpn(&["eval", ckpt.to_str().unwrap(), "--episodes", "3", "--seed", "7"]);
    let b = bpn(&["eval", ckpt.to_str().unwrap(), "--episodes", "3", "--seed", "7"]);
    assert_eq!(stdout(&a), stdout(&b));

    let frames = tmp.path().join("frames");
    let out = bpn(&[
        "eval",
        ckpt.to_str().unwrap(),
        "--episodes",
        "1",
        "--seed",
        "3",
        "--dump-frames",
        frames.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let pngs: Vec<_> = std::fs::read_dir(&frames)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "png"))
        .collect();
    assert!(!pngs.is_empty(), "no frames dumped");
}

#[test]
fn export_reports_compression_and_round_trips() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("run");
    train_mini(&dir, &["--nodes", "400"]);
    let ckpt = dir.join("latest.bpn1");
    let exported = tmp.path().join("exported.bpn1");
    let out = bpn(&[
        "export",
        ckpt.to_str().unwrap(),
        "--out",
        exported.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("1/3")); // every binarized layer prints ≈1/32

    // exported copy evaluates identically to the original
    let a = bpn(&["eval", ckpt.to_str().unwrap(), "--episodes", "2", "--seed", "5"]);
    let b = bpn(&["eval", exported.to_str().unwrap(), "--episodes", "2", "--seed", "5"]);
    assert_eq!(stdout(&a), stdout(&b));
}

#[test]
fn sweep_writes_heatmap_and_resumes() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("sweep");
    let mut args = vec!["sweep"];
    args.extend_from_slice(MINI);
    args.extend_from_slice(&[
        "--nodes-grid", "8,9",
        "--alpha-grid", "0,0.95",
        "--seeds", "1",
        "--out", dir.to_str().unwrap(),
    ]);
    let out = bpn(&args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let heatmap = std::fs::read_to_string(dir.join("heatmap.csv")).unwrap();
    assert!(heatmap.starts_with("n,alpha,seed_mean_max_reward\n"));
    assert_eq!(heatmap.lines().count(), 1 + 4, "one row per (n, α) cell");

    // completed cells are skipped on rerun: delete one marker, rerun, and
    // confirm only that cell re-trains (its curves mtime changes).
    let cell_kept = dir.join("n8-a0-s0");
    let cell_redo = dir.join("n9-a0.95-s0");
    std::fs::remove_file(cell_redo.join("COMPLETE")).unwrap();
    let kept_mtime = std::fs::metadata(cell_kept.join("curves.csv")).unwrap().modified().unwrap();
    let out = bpn(&args);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        std::fs::metadata(cell_kept.join("curves.csv")).unwrap().modified().unwrap(),
        kept_mtime,
        "completed cell must be skipped"
    );
    assert!(cell_redo.join("COMPLETE").exists(), "missing marker must re-run");
}

#[test]
fn identical_configs_reproduce_curves_byte_for_byte() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("run");
    train_mini(&dir, &["--seed", "3"]);
    let first = std::fs::read(dir.join("curves.csv")).unwrap();
    std::fs::remove_dir_all(&dir).unwrap();
    train_mini(&dir, &["--seed", "3"]);
    let second = std::fs::read(dir.join("curves.csv")).unwrap();
    assert_eq!(first, second);
}

#[test]
fn config_file_is_applied_and_overridden() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("run.cfg");
    std::fs::write(&cfg, "nodes = 8\niterations = 1\nepisodes = 1\nsteps = 3\nepochs = 1\nbatch = 4\nseed = 2\n").unwrap();
    let dir = tmp.path().join("run");
    let out = bpn(&[
        "train",
        "--config", cfg.to_str().unwrap(),
        "--seed", "4", // overrides the config file's seed
        "--out", dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = std::fs::read_to_string(dir.join("manifest.txt")).unwrap();
    assert!(manifest.contains("nodes = 8"));
    assert!(manifest.contains("seed = 4"));
}
