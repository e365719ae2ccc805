// Copyright 2026 polarlandscape Contributors
// SPDX-License-Identifier: Apache-2.0

use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polarlandscape"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn config_json(dir: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("config.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn unknown_config_key_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "seed = 3\nbogus = 1\n").unwrap();
    let out = run(&["singular_census", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn invalid_override_exits_with_one() {
    let out = run(&["trap_census_generic", "--dimension", "1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_config_file_exits_with_one() {
    let out = run(&["singular_census", "--config", "/nonexistent/polarlandscape.toml"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_subcommand_is_rejected() {
    let out = run(&["no_such_experiment"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn run_writes_outputs_and_applies_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("census");
    let out = run(&[
        "singular_census",
        "--models",
        "1",
        "--seed",
        "42",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["rows.csv", "summary.json", "config.json"] {
        assert!(out_dir.join(name).is_file(), "{name} missing");
    }
    let printed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let written: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(printed, written);
    let config = config_json(&out_dir);
    assert_eq!(config["seed"], 42);
    assert_eq!(config["n_models"], 1);
    let rows = std::fs::read_to_string(out_dir.join("rows.csv")).unwrap();
    // header plus one generic and one Heisenberg tuple
    assert_eq!(rows.lines().count(), 3);
}

#[test]
fn flags_override_config_file_sections() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    let out_dir = dir.path().join("out");
    std::fs::write(&path, "seed = 5\nn_models = 3\n\n[singular_census]\nn_models = 2\nsingular_steps = 200\n").unwrap();
    let out = run(&[
        "singular_census",
        "--config",
        path.to_str().unwrap(),
        "--models",
        "1",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let config = config_json(&out_dir);
    assert_eq!(config["seed"], 5);
    assert_eq!(config["n_models"], 1);
    assert_eq!(config["singular_steps"], 200);
}
