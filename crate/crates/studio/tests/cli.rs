use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn chad(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chad"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok_json(dir: &Path, args: &[&str]) -> Value {
    let out = chad(dir, args);
    assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 1, "{stdout}");
    serde_json::from_str(&stdout).unwrap()
}

#[test]
fn help_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let help = chad(dir.path(), &["--help"]);
    assert_eq!(help.status.code(), Some(0));
    let text = String::from_utf8(help.stdout).unwrap();
    for sub in ["ingest", "train-manifold", "train-gan", "interpolate", "denoise", "serve"] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
    assert_eq!(chad(dir.path(), &["paint"]).status.code(), Some(2));
    assert_eq!(chad(dir.path(), &["ingest", "--res", "abc"]).status.code(), Some(2));
}

#[test]
fn failures_print_one_json_error_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = chad(dir.path(), &["ingest", "--src", "missing-dir", "--out", "ds"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    let line = stderr.lines().rev().find(|l| l.starts_with('{')).unwrap();
    let e: Value = serde_json::from_str(line).unwrap();
    assert_eq!(e["error"], "not-found");
    assert!(out.stdout.is_empty());

    let out = chad(dir.path(), &["interpolate", "--model", "nope.chad", "--keys", "1,2", "--out", "r"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn small_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let m = ok_json(dir, &["ingest", "--synthetic", "24", "--res", "16", "--grayscale", "--out", "ds"]);
    assert_eq!((m["frames"].as_u64(), m["channels"].as_u64()), (Some(24), Some(1)));

    let s = ok_json(
        dir,
        &[
            "train-manifold",
            "--data",
            "ds",
            "--zdim",
            "4",
            "--stage-epochs",
            "1",
            "--decoder-width",
            "8",
            "--out",
            "m.chad",
        ],
    );
    assert!(s["one_step_error"].as_f64().unwrap().is_finite());
    assert!(dir.join("m.chad").is_file());

    let g = ok_json(
        dir,
        &[
            "train-gan",
            "--model",
            "m.chad",
            "--epochs-per-stage",
            "1",
            "--width",
            "4",
            "--max-width",
            "8",
            "--batch",
            "8",
            "--out",
            "g.chad",
        ],
    );
    assert!(g["final_reconstruction"].as_f64().unwrap().is_finite());

    // One keyframe is not enough.
    let out = chad(dir, &["interpolate", "--model", "g.chad", "--keys", "3", "--out", "r"]);
    assert_eq!(out.status.code(), Some(1));

    let r = ok_json(
        dir,
        &[
            "interpolate",
            "--model",
            "g.chad",
            "--keys",
            "3,17",
            "--seconds",
            "0.5",
            "--fps",
            "10",
            "--mode",
            "spline",
            "--out",
            "r",
        ],
    );
    assert_eq!(r["frames"], 5);
    assert_eq!(r["duration"], 0.5);
    assert!(dir.join("r/final/frame_000004.png").is_file());
    assert!(dir.join("r/gan/frame_000004.png").is_file());
    assert!(dir.join("r/report.json").is_file());

    let d = ok_json(
        dir,
        &["denoise", "--model", "g.chad", "--frames", "r/gan", "--k", "2", "--out", "d"],
    );
    assert_eq!(d["frames"], 5);
    assert!(d["path_cost"].as_f64().unwrap().is_finite());
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("d/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["fps"], 10.0);
    assert!(dir.join("d/denoise.txt").is_file());
}
