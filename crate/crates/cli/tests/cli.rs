use std::path::Path;
use std::process::{Command, Output};

fn relucone(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relucone")).args(args).output().unwrap()
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    let mut all = args.to_vec();
    all.extend(["--out-dir", dir.to_str().unwrap()]);
    relucone(&all)
}

#[test]
fn lists_bundled_scenarios() {
    let out = relucone(&["scenarios"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["fig1-preimage", "fig2-bias-only", "fig3-identity", "fig3-wide", "fig4-triangle"] {
        assert!(text.contains(name), "{text}");
    }
}

#[test]
fn preimage_writes_all_formats() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["preimage", "--scenario", "fig1-preimage", "--format", "json", "--format", "obj", "--format", "svg"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for ext in ["json", "obj", "svg"] {
        assert!(dir.path().join(format!("fig1-preimage.{ext}")).exists());
    }
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("fig1-preimage.json")).unwrap()).unwrap();
    assert_eq!(json["schema"], 1);
    assert!(json["summary"]["max_residual"].as_f64().unwrap() < 1e-8);
}

#[test]
fn every_subcommand_runs_its_scenario() {
    let dir = tempfile::tempdir().unwrap();
    for (cmd, name) in [("flow", "fig2-bias-only"), ("cells", "fig3-identity"), ("nesting", "fig3-wide"), ("trace", "fig4-triangle")] {
        let out = run_in(dir.path(), &[cmd, "--scenario", name, "--format", "svg", "--quiet"]);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(dir.path().join(format!("{name}.svg")).exists());
    }
}

#[test]
fn config_file_and_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let show = relucone(&["scenarios", "--show", "fig1-preimage"]);
    assert!(show.status.success());
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, &show.stdout).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let out = run_in(d, &["run", "--config", cfg.to_str().unwrap(), "--seed", "9"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let read = |d: &Path| std::fs::read(d.join("fig1-preimage.json")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn task_mismatch_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["trace", "--scenario", "fig1-preimage"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"schema": 1, "name": "x", "dimension": 2, "layers": [], "task": {"kind": "cells"}}"#).unwrap();
    assert_eq!(run_in(dir.path(), &["cells", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run_in(dir.path(), &["cells", "--config", "/nonexistent/cfg.json"]).status.code(), Some(2));
    assert_eq!(run_in(dir.path(), &["preimage", "--scenario", "unknown"]).status.code(), Some(2));
}

#[test]
fn obj_needs_three_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["flow", "--scenario", "fig2-bias-only", "--format", "obj"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unreachable_target_is_a_core_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("empty.json");
    std::fs::write(
        &cfg,
        r#"{"schema": 1, "name": "empty", "dimension": 2,
            "layers": [{"taps": [1.0, 0.0], "bias": 0.5}],
            "task": {"kind": "preimage", "target": [0.2, 0.7]}}"#,
    )
    .unwrap();
    let out = run_in(dir.path(), &["preimage", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}
