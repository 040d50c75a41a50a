//! End-to-end runs of the binary: outputs, determinism and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_adaptive-stab");

fn config(dir: &Path, name: &str, params: Value) -> PathBuf {
    let mut p = json!({ "h_samples": 20000, "lipschitz_samples": 5000 });
    for (k, v) in params.as_object().unwrap() {
        p[k] = v.clone();
    }
    let cfg = json!({ "example": "pwa", "params": p, "horizon": 300, "n_trials": 6, "cap": 10000, "deltas": [0.1] });
    let path = dir.join(name);
    std::fs::write(&path, cfg.to_string()).unwrap();
    path
}

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(BIN).arg("--out").arg(out).args(args).env_remove("ADAPTIVE_STAB_SEED").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn simulate_writes_fixed_columns_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "pwa.json", json!({}));
    let out = tmp.path().join("sim");
    let o = run(&out, &["simulate", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(header(&out.join("ensemble.csv")), "t,median_absx,q90_absx,median_err,q90_err,e_bound,x_bar_bound");
    assert_eq!(std::fs::read_to_string(out.join("ensemble.csv")).unwrap().lines().count(), 302);
    assert!(std::fs::read_to_string(out.join("ensemble.svg")).unwrap().starts_with("<svg"));
    let m: Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["exit_code"], 0);
    assert!(m["version"].as_str().unwrap().starts_with("v0.1.0"));
    assert!(m["outputs"].as_array().unwrap().iter().any(|v| v == "ensemble.csv"));
}

#[test]
fn simulate_is_deterministic_across_runs_and_threads() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "pwa.json", json!({}));
    let c = cfg.to_str().unwrap();
    let read = |d: &str| std::fs::read(tmp.path().join(d).join("ensemble.csv")).unwrap();
    for d in ["a", "b"] {
        assert_eq!(code(&run(&tmp.path().join(d), &["simulate", c, "--trials", "1", "--seed", "7", "--no-svg"])), 0);
    }
    assert_eq!(read("a"), read("b"));
    assert_eq!(code(&run(&tmp.path().join("one"), &["--threads", "1", "simulate", c, "--no-svg"])), 0);
    assert_eq!(code(&run(&tmp.path().join("many"), &["simulate", c, "--no-svg"])), 0);
    assert_eq!(read("one"), read("many"));
    assert_ne!(read("a"), read("one"));
}

#[test]
fn seed_environment_override() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "pwa.json", json!({}));
    let c = cfg.to_str().unwrap();
    let o = Command::new(BIN)
        .args(["--out", tmp.path().join("env").to_str().unwrap(), "simulate", c, "--no-svg"])
        .env("ADAPTIVE_STAB_SEED", "7")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(code(&run(&tmp.path().join("flag"), &["simulate", c, "--seed", "7", "--no-svg"])), 0);
    let read = |d: &str| std::fs::read(tmp.path().join(d).join("ensemble.csv")).unwrap();
    assert_eq!(read("env"), read("flag"));
}

#[test]
fn bounds_and_sweep_columns() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "pwa.json", json!({}));
    let c = cfg.to_str().unwrap();
    let out = tmp.path().join("b");
    let o = run(&out, &["bounds", c, "--rows", "20"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(header(&out.join("schedule_delta0.1.csv")), "t,w_bar,x_bar,z_bar,beta_max,e,eta");
    assert!(out.join("bounds_delta0.1.json").exists());
    let out = tmp.path().join("s");
    let o = run(&out, &["sweep", c, "--param", "x_bar", "--values", "10,100,1000"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        header(&out.join("sweep.csv")),
        "value,delta,holds,basis,holds_half,burn_in,converge,contained,burn_in_upper,converge_upper,e1,e1_prior,reason"
    );
    let s: Value = serde_json::from_str(&std::fs::read_to_string(out.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(s["monotone"], true);
}

#[test]
fn certify_passes_on_the_shipped_example() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "pwa.json", json!({}));
    let out = tmp.path().join("c");
    let o = run(&out, &["certify", cfg.to_str().unwrap(), "--samples", "2000"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("certificates.json").exists());
    let m: Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["certificate_hashes"]["certificates.json"].as_str().unwrap().len(), 64);
}

#[test]
fn exit_codes() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("x");
    let good = config(tmp.path(), "pwa.json", json!({}));
    let g = good.to_str().unwrap();

    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, r#"{ "example": "pwa", "horizon": 0 }"#).unwrap();
    assert_eq!(code(&run(&out, &["simulate", bad.to_str().unwrap()])), 2);
    std::fs::write(&bad, r#"{ "example": "pwa", "typo": 1 }"#).unwrap();
    assert_eq!(code(&run(&out, &["simulate", bad.to_str().unwrap()])), 2);
    assert_eq!(code(&run(&out, &["simulate", "/no/such/config.json"])), 2);
    assert_eq!(code(&run(&out, &["--threads", "0", "simulate", g])), 2);
    assert_eq!(code(&run(&out, &["sweep", g, "--param", "x_bar", "--values", "1,abc"])), 2);
    assert_eq!(code(&run(&out, &["bounds", g, "--delta", "1.5"])), 2);

    let no_dither = config(tmp.path(), "flat.json", json!({ "u_bar2": 0.0 }));
    let n = no_dither.to_str().unwrap();
    assert_eq!(code(&run(&out, &["certify", n, "--what", "excitation", "--samples", "2000"])), 4);
    assert_eq!(code(&run(&out, &["bounds", n])), 5);

    let missing = tmp.path().join("missing.json");
    std::fs::write(&missing, json!({ "example": "pwa", "certificates": "nowhere.json", "params": { "h_samples": 20000 } }).to_string()).unwrap();
    assert_eq!(code(&run(&out, &["bounds", missing.to_str().unwrap()])), 5);
}
