use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn harmlil(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_harmlil")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn out_arg(dir: &Path) -> String {
    dir.display().to_string()
}

const TOY: &str = "[counterexample]\na = 2\nbeta = 0 2 6\nrelax_bracketing = true\nrelax_lacunarity = true\nrelax_j0 = true\n";

#[test]
fn weights_check_writes_hashed_files() {
    let dir = TempDir::new().unwrap();
    let o = harmlil(&["weights", "check", "--override", "weight.token=pow:0.5", "--out", &out_arg(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    assert!(manifest.contains("status = pass"));
    for name in ["scales.csv", "multiplier.csv", "config.ini"] {
        let bytes = fs::read(dir.path().join(name)).unwrap();
        assert!(manifest.contains(&format!("{name} = {}", hex::encode(Sha256::digest(&bytes)))), "{name}");
    }
    let scales = fs::read_to_string(dir.path().join("scales.csv")).unwrap();
    assert!(scales.starts_with("k,s,alpha\n0,1.0000000000000000e0,0\n"));
    assert_eq!(scales.lines().count(), 42);
}

#[test]
fn usage_and_config_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let out = out_arg(dir.path());
    let o = harmlil(&["weights", "check", "--override", "weight.token=pow:-1", "--out", &out]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("pow:-1"));
    assert_eq!(code(&harmlil(&["weights", "frobnicate"])), 2);
    assert_eq!(code(&harmlil(&["suite", "nine", "--out", &out])), 2);
    let o = harmlil(&["field", "build", "--override", "field.colour=red", "--out", &out]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("[field] colour"));
}

#[test]
fn config_round_trips_through_the_output_directory() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("toy.ini");
    fs::write(&cfg, TOY).unwrap();
    let first = dir.path().join("a");
    let o = harmlil(&["--config", cfg.to_str().unwrap(), "counterexample", "build", "--out", &out_arg(&first)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let second = dir.path().join("b");
    let written = first.join("config.ini");
    let o = harmlil(&["--config", written.to_str().unwrap(), "counterexample", "build", "--out", &out_arg(&second)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let a = fs::read_to_string(written).unwrap();
    let b = fs::read_to_string(second.join("config.ini")).unwrap();
    assert_eq!(a.replace(&out_arg(&first), ""), b.replace(&out_arg(&second), ""));
    assert_eq!(fs::read(first.join("snapshot.csv")).unwrap(), fs::read(second.join("snapshot.csv")).unwrap());
}

#[test]
fn toy_counterexample_passes_and_reloads() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("toy.ini");
    fs::write(&cfg, TOY).unwrap();
    let cfg = cfg.to_str().unwrap();
    let build = dir.path().join("build");
    assert_eq!(code(&harmlil(&["--config", cfg, "counterexample", "build", "--out", &out_arg(&build)])), 0);
    let snap = build.join("snapshot.csv");
    let check = dir.path().join("check");
    let o = harmlil(&[
        "--config",
        cfg,
        "--override",
        &format!("counterexample.snapshot={}", snap.display()),
        "counterexample",
        "check",
        "--out",
        &out_arg(&check),
    ]);
    assert_eq!(code(&o), 0, "{}{}", String::from_utf8_lossy(&o.stdout), stderr(&o));
    let measures = fs::read_to_string(check.join("measures.csv")).unwrap();
    let witnesses: Vec<f64> = measures
        .lines()
        .filter(|l| l.starts_with("config_witness_") || l.starts_with("config_level_"))
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(!witnesses.is_empty() && witnesses.iter().all(|&m| m >= 0.1), "{measures}");

    // a tampered snapshot no longer reproduces
    fs::write(&snap, fs::read_to_string(&snap).unwrap().replacen(",1,", ",0,", 1)).unwrap();
    let o = harmlil(&[
        "--config",
        cfg,
        "--override",
        &format!("counterexample.snapshot={}", snap.display()),
        "counterexample",
        "check",
        "--out",
        &out_arg(&check),
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn default_counterexample_with_w0_is_refused() {
    let dir = TempDir::new().unwrap();
    let o = harmlil(&["counterexample", "build", "--out", &out_arg(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("bracketing"), "{}", stderr(&o));
}

#[test]
fn constant_field_ratios_decay() {
    let dir = TempDir::new().unwrap();
    let o = harmlil(&[
        "experiment",
        "lil",
        "--override",
        "weight.token=pow:1",
        "--override",
        "field.kind=constant",
        "--override",
        "delta.grid=dyadic:1000",
        "--override",
        "samples.count=2",
        "--out",
        &out_arg(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let profile = fs::read_to_string(dir.path().join("profile_000.csv")).unwrap();
    let ratios: Vec<f64> = profile.lines().skip(1).filter_map(|l| l.split(',').nth(2)?.parse().ok()).collect();
    assert!(ratios.len() > 900);
    assert!(ratios.windows(2).skip(10).all(|p| p[1] <= p[0]));
    assert!(*ratios.last().unwrap() < 0.05, "{}", ratios.last().unwrap());
}

#[test]
fn lacunary_experiment_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let run = |sub: &str| {
        let out = dir.path().join(sub);
        let o = harmlil(&[
            "experiment",
            "lil",
            "--seed",
            "11",
            "--override",
            "samples.kind=random",
            "--override",
            "samples.count=4",
            "--out",
            &out_arg(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let p = harmlil(&[
            "plot",
            "--input",
            out.join("profile_001.csv").to_str().unwrap(),
            "--x",
            "depth",
            "--y",
            "ratio",
            "--x-map",
            "log10",
            "--out",
            &out_arg(&out),
        ]);
        assert_eq!(code(&p), 0, "{}", stderr(&p));
        out
    };
    let (a, b) = (run("a"), run("b"));
    for name in ["profiles.csv", "profile_000.csv", "profile_003.csv", "profile_001.svg"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let svg = fs::read_to_string(a.join("profile_001.svg")).unwrap();
    assert!(svg.contains("<polyline"));
}

#[test]
fn plot_names_missing_columns_and_draws_empty_tables() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("empty.csv");
    fs::write(&csv, "delta,ratio\n").unwrap();
    let svg = dir.path().join("empty.svg");
    let o = harmlil(&["plot", "--input", csv.to_str().unwrap(), "--x", "delta", "--y", "ratio", "--output", svg.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(&svg).unwrap();
    assert!(text.contains("<path") && !text.contains("<polyline"));
    let o = harmlil(&["plot", "--input", csv.to_str().unwrap(), "--x", "delta", "--y", "value"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("`value`"));
}

#[test]
fn martingale_outputs_match_the_manifest_status() {
    let dir = TempDir::new().unwrap();
    let o = harmlil(&[
        "martingale",
        "check",
        "--override",
        "weight.token=pow:1",
        "--override",
        "field.levels=8",
        "--override",
        "martingale.levels=3",
        "--override",
        "martingale.points=8",
        "--out",
        &out_arg(dir.path()),
    ]);
    let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    let passed = manifest.contains("status = pass");
    assert_eq!(code(&o), if passed { 0 } else { 1 }, "{}", stderr(&o));
    let table = fs::read_to_string(dir.path().join("martingale.csv")).unwrap();
    // three levels of pow:1 live on 1 + 2 + 4 cells
    assert_eq!(table.lines().count(), 1 + 7);
    assert!(dir.path().join("li_bounds.csv").exists());
}

#[test]
fn suites_run_by_number_and_name() {
    let dir = TempDir::new().unwrap();
    let o = harmlil(&["suite", "8", "--out", &out_arg(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS criterion_8"));
    let o = harmlil(&["suite", "quadrature-oracles", "--out", &out_arg(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}
