use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wrist-recon")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn code(args: &[&str]) -> i32 {
    run(args).status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn key_values(path: &Path) -> BTreeMap<String, String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn small_synth(dir: &Path, extra: &[&str]) -> PathBuf {
    let out = dir.join("synth");
    let mut args = vec!["--seed", "3", "--out", p(&out), "synth", "--points", "3000", "--frames", "3", "--tracks", "300"];
    args.extend_from_slice(extra);
    ok(&args);
    out
}

#[test]
fn synth_writes_the_documented_tree() {
    let dir = tempfile::tempdir().unwrap();
    let s = small_synth(dir.path(), &["--ascii"]);
    for f in [
        "cloud.ply",
        "cameras.toml",
        "anchor_0.pointmap.wwtc",
        "anchor_1.pointmap.wwtc",
        "gt_trajectory.txt",
        "manifest.toml",
        "synth_report.txt",
        "correspondences/frame_0002.csv",
        "gt_render/frame_0000.png",
        "gt_render/frame_0000.depth.pfm",
        "gt_render/frame_0000.mask.png",
    ] {
        assert!(s.join(f).is_file(), "missing {f}");
    }
    assert!(std::fs::read_to_string(s.join("cloud.ply")).unwrap().starts_with("ply\nformat ascii 1.0\n"));
    let report = key_values(&s.join("synth_report.txt"));
    assert_eq!(report["points"], "3000");
    assert_eq!(report["frames"], "3");
    assert_eq!(report["seed"], "3");
}

#[test]
fn pipeline_on_noiseless_scene_recovers_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let s = small_synth(dir.path(), &[]);
    let m = s.join("manifest.toml");
    let (solve, render, eval) = (dir.path().join("solve"), dir.path().join("render"), dir.path().join("eval"));
    ok(&["--config", p(&m), "--out", p(&solve), "solve-pose"]);
    let traj = solve.join("trajectory.txt");
    ok(&["--config", p(&m), "--out", p(&render), "render-condition", "--trajectory", p(&traj)]);
    ok(&["--config", p(&m), "--out", p(&eval), "eval", "--pred-trajectory", p(&traj), "--pred-images", p(&render)]);
    let kv = key_values(&eval.join("metrics.txt"));
    assert_eq!(kv["frames"], "3");
    assert!(kv["rotation_deg"].parse::<f64>().unwrap() < 1e-6);
    assert!(kv["reprojection_rmse"].parse::<f64>().unwrap() < 1e-6);
    assert_eq!(kv["psnr_identical_frames"], "3");
    assert_eq!(kv["fvd"], "unavailable");
    let solve_kv = key_values(&solve.join("solve_report.txt"));
    assert_eq!(solve_kv["converged"], "3");
}

#[test]
fn tokens_from_rendered_views() {
    let dir = tempfile::tempdir().unwrap();
    let s = small_synth(dir.path(), &[]);
    let gt = s.join("gt_render");
    let out = dir.path().join("tokens");
    ok(&["--out", p(&out), "tokens", "--view", p(&gt), "--view", p(&gt), "--d", "16", "--d-c", "8"]);
    let kv = key_values(&out.join("tokens_report.txt"));
    assert_eq!(kv["token_count"], "6");
    assert_eq!(kv["d"], "16");
    assert!(out.join("tokens.wwtc").is_file());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    // unreadable input
    assert_eq!(code(&["--config", "/nonexistent/manifest.toml", "--out", p(&out), "solve-pose"]), 2);
    // malformed manifest
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "seed = \"x\"\n").unwrap();
    assert_eq!(code(&["--config", p(&bad), "--out", p(&out), "synth"]), 2);
    // unknown manifest key
    std::fs::write(&bad, "[scene]\nn_pointz = 3\n").unwrap();
    assert_eq!(code(&["--config", p(&bad), "--out", p(&out), "synth"]), 2);
    // nothing to solve
    assert_eq!(code(&["--out", p(&out), "solve-pose"]), 2);
    // too few points for any co-visible correspondences
    assert_eq!(code(&["--out", p(&out), "synth", "--points", "3", "--frames", "1"]), 4);

    // predicted poses with every point behind the camera: reprojection has no front tracks
    let s = small_synth(dir.path(), &[]);
    let behind = dir.path().join("behind.txt");
    std::fs::write(&behind, "1 0 0 0 1 0 0 0 1 0 0 -100\n".repeat(3)).unwrap();
    let m = s.join("manifest.toml");
    assert_eq!(code(&["--config", p(&m), "--out", p(&out), "eval", "--pred-trajectory", p(&behind)]), 3);
}
