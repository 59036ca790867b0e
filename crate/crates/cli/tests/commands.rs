use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command as Proc;

use kacmix::exact::{enumerate, EnumerateOptions};
use kacmix::thermo::pressure_1d;
use kacmix::{Boundary, ModelParams, TorusLattice};
use kacmix_cli::config::from_value;
use kacmix_cli::run_with_workers;
use serde_json::{json, Value};

fn run_in(dir: &Path, mut cfg: Value, workers: usize) -> BTreeMap<String, Vec<u8>> {
    cfg["output"] = json!({"dir": dir});
    let cfg = from_value(cfg).unwrap();
    run_with_workers(&cfg, workers).unwrap();
    csvs(dir)
}

fn csvs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "csv") {
            out.insert(p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap());
        }
    }
    out
}

fn keyed(path: &Path) -> BTreeMap<String, String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

#[test]
fn exact_matches_library_and_transfer_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let files = run_in(
        dir.path(),
        json!({"command": "exact", "model": {"dim": 1, "side": 8, "beta": 0.7, "field": 0.3}}),
        1,
    );
    let s = keyed(&dir.path().join("summary.txt"));
    let log_z: f64 = s["log_z"].parse().unwrap();
    let lat = TorusLattice::new(1, 8).unwrap();
    let params = std::sync::Arc::new(ModelParams::nearest_neighbour(lat, 0.7, Boundary::Periodic, 0.3).unwrap());
    let lib = enumerate(&params, EnumerateOptions::default()).unwrap();
    assert_eq!(log_z, lib.log_z());
    // log Z ≥ N β p(h) with equality up to the subleading eigenvalue
    assert!((log_z - 8.0 * 0.7 * pressure_1d(0.7, 0.3)).abs() < 1e-2);
    let levels = String::from_utf8(files["levels.csv"].clone()).unwrap();
    assert_eq!(levels.lines().count(), 1 + 9);
    assert!(levels.starts_with("plus_count,magnetization,log_canonical_sum\n"));
    let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    assert!(manifest.contains("command = exact"));
    assert!(manifest.contains("\"beta\": 0.7"));
}

#[test]
fn thermo_and_equivalence_tables() {
    let dir = tempfile::tempdir().unwrap();
    let files = run_in(
        dir.path(),
        json!({"command": "thermo", "model": {"dim": 1, "side": 8, "beta": 0.7}, "run": {"grid_points": 11}}),
        1,
    );
    assert_eq!(String::from_utf8_lossy(&files["curve.csv"]).lines().count(), 12);
    assert_eq!(String::from_utf8_lossy(&files["pressure.csv"]).lines().count(), 24);
    for line in String::from_utf8_lossy(&files["el_roundtrip.csv"]).lines().skip(1) {
        let err: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(err < 1e-8, "{line}");
    }
    let dir = tempfile::tempdir().unwrap();
    let files = run_in(
        dir.path(),
        json!({"command": "equivalence", "model": {"dim": 1, "side": 8, "beta": 0.7, "u": "cosine amplitude 0.4", "cells": 4},
               "run": {"grid_points": 5}}),
        1,
    );
    let table = String::from_utf8_lossy(&files["duality.csv"]).into_owned();
    assert_eq!(table.lines().count(), 6);
    for line in table.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let residual: f64 = cols[3].parse().unwrap();
        assert!(residual < 1e-6, "{line}");
        assert_eq!(cols[6], "0", "{line}");
    }
    let s = keyed(&dir.path().join("summary.txt"));
    assert!(s["profile_residual"].parse::<f64>().unwrap() < 1e-6);
}

#[test]
fn sample_reports_law_distance() {
    let dir = tempfile::tempdir().unwrap();
    run_in(
        dir.path(),
        json!({"command": "sample", "model": {"dim": 1, "side": 4, "beta": 0.5},
               "run": {"sweeps": 20000, "observables": ["magnetization", "configuration_law"], "replicas": 2}}),
        1,
    );
    let s = keyed(&dir.path().join("summary.txt"));
    assert_eq!(s["samples"], "40000");
    assert!(s["tv_to_exact"].parse::<f64>().unwrap() < 0.03);
    let obs = fs::read_to_string(dir.path().join("observables.csv")).unwrap();
    assert!(obs.contains("\nmagnetization,40000,"));
}

#[test]
fn sample_writes_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    run_in(
        dir.path(),
        json!({"command": "sample", "model": {"dim": 2, "side": 8, "beta": 0.3, "gamma": 0.25},
               "run": {"sweeps": 10, "snapshot_every": 5, "observables": ["kac_energy"]}}),
        1,
    );
    // snapshots are off unless requested
    assert!(!dir.path().join("snapshots").exists());
    let dir2 = tempfile::tempdir().unwrap();
    let mut cfg = json!({"command": "sample", "model": {"dim": 2, "side": 8, "beta": 0.3, "gamma": 0.25},
                         "run": {"sweeps": 10, "snapshot_every": 5}});
    cfg["output"] = json!({"dir": dir2.path(), "snapshots": true});
    run_with_workers(&from_value(cfg).unwrap(), 1).unwrap();
    let mut f = fs::File::open(dir2.path().join("snapshots/snapshot_00001.ksnp")).unwrap();
    let snap = kacmix::sampler::read_snapshot(&mut f).unwrap();
    assert_eq!(snap.sweep, 10);
    assert_eq!(snap.config.lattice().side(), 8);
}

fn small_regime(command: &str) -> Value {
    json!({"command": command,
           "model": {"dim": 2, "side": 16, "beta": 1.0, "gamma": 0.25, "u": 0.0, "cells": 2},
           "run": {"sweeps": 30, "burn_in": 10, "radii": [1, 3], "keep": 2, "box_sides": [8, 16],
                   "domination_betas": [0.9, 1.1], "seed": 5,
                   "phase_laws": {"box_side": 8, "sweeps": 20}}})
}

#[test]
fn young_and_fk_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let files = run_in(dir.path(), small_regime("young"), 1);
    for name in ["distances.csv", "alpha.csv", "young_r1.csv", "young_r3.csv"] {
        assert!(files.contains_key(name), "{name}");
    }
    let dir = tempfile::tempdir().unwrap();
    let files = run_in(dir.path(), small_regime("fk-diagnose"), 1);
    for name in ["box_fractions.csv", "boxes_k8.csv", "boxes_k16.csv", "bad_kac.csv", "domination.csv"] {
        assert!(files.contains_key(name), "{name}");
    }
    let fr = String::from_utf8_lossy(&files["box_fractions.csv"]).into_owned();
    assert_eq!(fr.lines().count(), 1 + 2 * 2);
    let dom = String::from_utf8_lossy(&files["domination.csv"]).into_owned();
    for line in dom.lines().skip(1) {
        assert!(line.ends_with(",true,0"), "{line}");
    }
}

#[test]
fn reruns_are_byte_identical() {
    for cfg in [
        small_regime("fk-diagnose"),
        json!({"command": "sample", "model": {"dim": 2, "side": 8, "beta": 0.4},
               "run": {"sweeps": 200, "replicas": 3, "seed": 11, "burn_in": "auto", "pilot": 50}}),
        json!({"command": "exact", "model": {"dim": 2, "side": 4, "beta": 0.4, "gamma": 0.5, "u": 0.25}}),
        json!({"command": "thermo", "model": {"dim": 2, "side": 8, "beta": 0.6}, "run": {"grid_points": 9}}),
    ] {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let first = run_in(a.path(), cfg.clone(), 1);
        let second = run_in(b.path(), cfg.clone(), 2);
        assert!(!first.is_empty());
        assert_eq!(first, second, "{cfg}");
    }
}

#[test]
fn binary_flags_and_errors() {
    let exe = env!("CARGO_BIN_EXE_kacmix");
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("exact.json");
    fs::write(&cfg_path, json!({"command": "exact", "model": {"dim": 1, "side": 8, "beta": 0.7}}).to_string()).unwrap();
    let out = dir.path().join("o");
    let st = Proc::new(exe)
        .args(["--config", cfg_path.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "3"])
        .args(["--workers", "2", "--set", "model.beta=0.5"])
        .output()
        .unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("seed = 3") && manifest.contains("workers = 2") && manifest.contains("\"beta\": 0.5"));

    let st = Proc::new(exe)
        .args(["exact", "--set", "model.dim=1", "--set", "model.side=6", "--set", "model.beta=1"])
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&st.stderr).contains("model.side"));

    let st = Proc::new(exe).args(["bogus"]).output().unwrap();
    assert_eq!(st.status.code(), Some(2));

    // module errors surface verbatim with a nonzero exit
    let st = Proc::new(exe)
        .args(["sample", "--out", out.to_str().unwrap()])
        .args(["--set", "model.dim=1", "--set", "model.side=8", "--set", "model.beta=0.6"])
        .args(["--set", "run.observables=[\"ball_0_r9\"]", "--set", "run.sweeps=2"])
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&st.stderr).contains("ball radius 9 outside"));
}
