//! Configuration parsing and parameter sweeps.

use adaptive_stab::config::{ExampleKind, ExperimentConfig};
use adaptive_stab::sweep::{flip_index, is_monotone, sweep};
use adaptive_stab::Error;
use serde_json::json;

fn light_pwa() -> ExperimentConfig {
    ExperimentConfig::from_json(
        &json!({
            "example": "pwa",
            "params": { "h_samples": 20000, "lipschitz_samples": 5000 },
            "cap": 10000
        })
        .to_string(),
    )
    .unwrap()
}

#[test]
fn config_rejects_bad_input() {
    let bad = [
        json!({ "example": "pwa", "unknown": 1 }),
        json!({ "example": "pendulum" }),
        json!({ "example": "pwa", "deltas": [1.5] }),
        json!({ "example": "pwa", "horizon": 0 }),
    ];
    for b in bad {
        assert!(matches!(ExperimentConfig::from_json(&b.to_string()), Err(Error::Config(_))), "{b}");
    }
    let cfg = ExperimentConfig::new(ExampleKind::Pwa);
    assert!(matches!(cfg.with_param("no_such", 1.0), Err(Error::Config(_))));
    assert!(cfg.sweepable().iter().any(|n| n == "x_bar"));
}

#[test]
fn shipped_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["pwa.json", "linear.json", "double_integrator.json"] {
        ExperimentConfig::from_path(&dir.join(name)).unwrap();
    }
}

#[test]
fn prior_part_of_first_error_is_gamma_free() {
    let cfg = light_pwa();
    let rows = sweep(&cfg, "gamma", &[1e-6, 1e-4, 1e-2, 1.0], 0.1, 100).unwrap();
    let theta_frob = (1.0f64 + 0.01).sqrt();
    for r in &rows {
        assert!((r.e1_prior - theta_frob).abs() < 1e-12);
        assert!(r.e1 > r.e1_prior);
    }
    // The noise part scales like gamma^{-1/2} up to logarithms.
    assert!(rows[0].e1 > 10.0 * rows[2].e1);
}

#[test]
fn sweep_rejects_empty_and_bad_values() {
    let cfg = light_pwa();
    assert!(matches!(sweep(&cfg, "x_bar", &[], 0.1, 100), Err(Error::Config(_))));
    assert!(matches!(sweep(&cfg, "delta", &[2.0], 0.1, 100), Err(Error::Config(_))));
    assert!(sweep(&cfg, "x_bar", &[0.01], 0.1, 100).is_err());
}

#[test]
fn delta_sweep_moves_contained_time_one_way() {
    let cfg = light_pwa();
    let rows = sweep(&cfg, "delta", &[0.01, 0.1, 0.5], 0.1, 100).unwrap();
    let c: Vec<String> = rows.iter().map(|r| r.contained.to_string()).collect();
    let n: Vec<u64> = c.iter().map(|s| s.parse().unwrap()).collect();
    assert!(n[0] <= n[1] && n[1] <= n[2]);
    assert!(rows.iter().all(|r| r.delta == r.value));
}

#[test]
fn monotone_and_flip_helpers() {
    let cfg = light_pwa();
    let mut rows = sweep(&cfg, "x_bar", &[3000.0, 3000.0, 3000.0], 0.1, 100).unwrap();
    assert!(rows.iter().all(|r| !r.holds));
    assert!(is_monotone(&rows) && flip_index(&rows).is_none());
    rows[2].holds = true;
    assert!(is_monotone(&rows));
    assert_eq!(flip_index(&rows), Some(2));
    rows[0].holds = true;
    assert!(!is_monotone(&rows));
}
