use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use adaptive_stab::bounds::{error_series, stability_envelope, state_bound, BoundSchedule, ConditionVerdict, StabilityEnvelope};
use adaptive_stab::certify::{certify, CertifyReport, CertifyWhat};
use adaptive_stab::config::{check_delta, CertificateFile, ExperimentConfig};
use adaptive_stab::examples::ExampleBundle;
use adaptive_stab::report::{ensemble_csv, schedule_csv, svg_chart, sweep_csv, BoundColumns, Series};
use adaptive_stab::sim::run_ensemble;
use adaptive_stab::sweep::{flip_index, is_monotone, sweep};
use adaptive_stab::{Error, Result};

use crate::manifest::OutDir;
use crate::{Cli, Cmd, EXIT_NOT_CERTIFIED, EXIT_OK};

pub const SEED_ENV: &str = "ADAPTIVE_STAB_SEED";

fn load(path: &Path) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_path(path)?;
    if let Ok(v) = std::env::var(SEED_ENV) {
        cfg.base_seed = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV} must be a non-negative integer, got {v:?}")))?;
    }
    Ok(cfg)
}

fn echo(cfg: &ExperimentConfig) -> Value {
    serde_json::to_value(cfg).unwrap_or(Value::Null)
}

fn seeds(cfg: &ExperimentConfig) -> BTreeMap<String, u64> {
    let mut m = BTreeMap::new();
    m.insert("base_seed".into(), cfg.base_seed);
    m.insert("scan_seed".into(), cfg.scan.seed);
    if let Some(s) = cfg.merged_params().get("seed").and_then(Value::as_u64) {
        m.insert("example_seed".into(), s);
    }
    m
}

/// Build the example, recording the hash of a configured certificate file.
fn build(cfg: &ExperimentConfig, out: &mut OutDir) -> Result<ExampleBundle> {
    let bundle = cfg.build(Some(out.root()))?;
    if let Some(c) = &cfg.certificates {
        if let Ok(bytes) = std::fs::read(out.root().join(c)) {
            out.hash_certificate(c, &bytes);
        }
    }
    Ok(bundle)
}

pub fn run(cli: &Cli) -> Result<u8> {
    let mut out = OutDir::create(&cli.out)?;
    let (name, cfg, code) = match &cli.cmd {
        Cmd::Simulate { config, trials, horizon, seed, no_svg } => {
            let mut cfg = load(config)?;
            if let Some(n) = trials {
                cfg.n_trials = *n;
            }
            if let Some(h) = horizon {
                cfg.horizon = *h;
            }
            if let Some(s) = seed {
                cfg.base_seed = *s;
            }
            cfg.validate()?;
            let code = simulate(&cfg, cli.threads == Some(1), !no_svg, &mut out)?;
            ("simulate", cfg, code)
        }
        Cmd::Certify { config, what, samples } => {
            let mut cfg = load(config)?;
            if let Some(n) = samples {
                cfg.scan.mc_samples = *n;
                cfg.scan.rpi_samples = *n;
            }
            let code = certify_cmd(&cfg, (*what).into(), &mut out)?;
            ("certify", cfg, code)
        }
        Cmd::Bounds { config, deltas, cap, rows } => {
            let mut cfg = load(config)?;
            if !deltas.is_empty() {
                cfg.deltas = deltas.clone();
            }
            if let Some(c) = cap {
                cfg.cap = *c;
            }
            if let Some(r) = rows {
                cfg.schedule_rows = Some(*r);
            }
            cfg.validate()?;
            let code = bounds_cmd(&cfg, &mut out)?;
            ("bounds", cfg, code)
        }
        Cmd::Sweep { config, param, values, delta, cap } => {
            let cfg = load(config)?;
            let values = parse_values(values)?;
            let delta = delta.unwrap_or(cfg.deltas[0]);
            check_delta(delta)?;
            let cap = cap.unwrap_or(cfg.cap);
            let code = sweep_cmd(&cfg, param, &values, delta, cap, &mut out)?;
            ("sweep", cfg, code)
        }
    };
    out.finish(name, echo(&cfg), seeds(&cfg), cli.threads, code as i32)?;
    Ok(code)
}

pub fn parse_values(s: &str) -> Result<Vec<f64>> {
    let values: Vec<f64> = s
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse::<f64>().map_err(|_| Error::Config(format!("cannot parse sweep value {v:?}"))))
        .collect::<Result<_>>()?;
    if values.is_empty() {
        return Err(Error::Config("--values is empty".into()));
    }
    Ok(values)
}

#[derive(Serialize)]
struct SimSummary<'a> {
    example: &'a str,
    horizon: usize,
    n_trials: usize,
    base_seed: u64,
    diverged: usize,
    rpi_coverage: adaptive_stab::sim::Coverage,
    bound_delta: f64,
    final_median_abs_x: f64,
    final_q90_abs_x: f64,
    final_median_err: f64,
    final_q90_err: f64,
    notes: &'a [String],
    config: Value,
}

fn simulate(cfg: &ExperimentConfig, sequential: bool, svg: bool, out: &mut OutDir) -> Result<u8> {
    let bundle = build(cfg, out)?;
    let mut settings = cfg.sim_settings();
    settings.sequential = sequential;
    let stats = run_ensemble(&bundle, &settings)?;
    let delta = cfg.deltas[0];
    let p = bundle.bound_problem();
    let x0 = bundle.x0_norm();
    let h = cfg.horizon as u64;
    let mut cols = BoundColumns::default();
    cols.e.push(None);
    match error_series(&p, delta, x0, h) {
        Ok(e) => cols.e.extend(e.into_iter().map(Some)),
        Err(Error::Missing(_)) => cols.e.extend(std::iter::repeat_n(None, cfg.horizon)),
        Err(e) => return Err(e),
    }
    for t in 0..=h {
        cols.x_bar.push(Some(state_bound(t, delta, x0, &p.cfs, p.u_max, p.sigma_w, p.n)?));
    }
    let mut csv = Vec::new();
    ensemble_csv(&stats, &cols, &mut csv)?;
    out.write("ensemble.csv", &csv)?;
    let last = cfg.horizon;
    let summary = SimSummary {
        example: &bundle.name,
        horizon: cfg.horizon,
        n_trials: cfg.n_trials,
        base_seed: cfg.base_seed,
        diverged: stats.diverged,
        rpi_coverage: stats.rpi_coverage,
        bound_delta: delta,
        final_median_abs_x: stats.median_abs_x[last],
        final_q90_abs_x: stats.q90_abs_x[last],
        final_median_err: stats.median_err[last],
        final_q90_err: stats.q90_err[last],
        notes: &bundle.notes,
        config: echo(cfg),
    };
    out.write_json("summary.json", &summary)?;
    if svg {
        let chart = svg_chart(
            &format!("|X(t)| over {} trials ({})", cfg.n_trials, bundle.name),
            "t",
            &[
                Series { name: "median", values: &stats.median_abs_x, color: "#1f77b4" },
                Series { name: "90th percentile", values: &stats.q90_abs_x, color: "#d62728" },
            ],
        );
        out.write("ensemble.svg", chart.as_bytes())?;
    }
    let c = stats.rpi_coverage;
    println!("example {} | trials {} | horizon {} | seed {}", bundle.name, cfg.n_trials, cfg.horizon, cfg.base_seed);
    println!("diverged {} | stayed in invariant set {}/{} (Wilson 95% [{:.3}, {:.3}])", stats.diverged, c.successes, c.trials, c.wilson_low, c.wilson_high);
    println!(
        "t = {last}: median |X| {:.4e}, q90 |X| {:.4e}, median error {:.4e}, q90 error {:.4e}",
        summary.final_median_abs_x, summary.final_q90_abs_x, summary.final_median_err, summary.final_q90_err
    );
    Ok(EXIT_OK)
}

fn certificate_file(bundle: &ExampleBundle, r: &CertifyReport) -> CertificateFile {
    let excitation = match &r.excitation {
        None => bundle.excitation.clone(),
        Some(e) if e.certified => e.analytic.clone().or_else(|| e.monte_carlo.clone()),
        Some(_) => None,
    };
    let rpi = Some(r.rpi.as_ref().map_or_else(|| bundle.rpi.clone(), |x| x.certificate.clone()));
    let lyapunov = match &r.lyapunov {
        None => bundle.lyapunov.clone(),
        Some(l) if l.certified => bundle.lyapunov.clone(),
        Some(_) => None,
    };
    CertificateFile { example: bundle.name.clone(), excitation, rpi, lyapunov }
}

fn certify_cmd(cfg: &ExperimentConfig, what: CertifyWhat, out: &mut OutDir) -> Result<u8> {
    let bundle = build(cfg, out)?;
    let report = certify(&bundle, what, &cfg.scan)?;
    let file = certificate_file(&bundle, &report);
    let text = serde_json::to_string_pretty(&file).map_err(|e| Error::Numeric(e.to_string()))? + "\n";
    out.write("certificates.json", text.as_bytes())?;
    out.hash_certificate("certificates.json", text.as_bytes());
    out.write_json("certify_report.json", &report)?;
    if let Some(ce) = report.rpi.as_ref().and_then(|r| r.certificate.falsified.as_ref()) {
        out.write_json("counterexample.json", ce)?;
    }
    let line = |name: &str, ok: bool, why: &Option<String>| match why {
        Some(w) if !ok => println!("{name}: NOT CERTIFIED ({w})"),
        _ => println!("{name}: {}", if ok { "certified" } else { "NOT CERTIFIED" }),
    };
    if let Some(e) = &report.excitation {
        line("excitation", e.certified, &e.reason);
        if let (Some(a), Some(s)) = (&e.analytic, &e.scan) {
            println!("  analytic c_PE1 {:.4e}, scan c_PE1 {:.4e} (se {:.1e}), p_PE {:.4e}", a.c_pe1, s.c_pe1, s.c_pe1_se, a.p_pe);
        }
    }
    if let Some(r) = &report.rpi {
        line("invariant set", r.certified, &r.reason);
        println!("  {} samples checked, vartheta_bar {:.4e}", r.certificate.samples_checked, r.certificate.vartheta_bar);
    }
    if let Some(l) = &report.lyapunov {
        line("lyapunov", l.certified, &l.reason);
    }
    Ok(if report.certified() { EXIT_OK } else { EXIT_NOT_CERTIFIED })
}

fn verdict_line(label: &str, v: &ConditionVerdict) -> String {
    let conv = v.converge.map_or("none".to_string(), |t| t.to_string());
    let mut s = format!("{label} (delta = {}): {} | T_converge bound {conv} | T_contained {}", v.delta, v.holds, v.contained);
    if let Some(b) = v.basis {
        s.push_str(&format!(" | basis {}", serde_json::to_value(b).ok().and_then(|x| x.as_str().map(String::from)).unwrap_or_default()));
    }
    if let Some(r) = &v.reason {
        s.push_str(&format!(" | {r}"));
    }
    s
}

#[derive(Serialize)]
struct BoundsOutput<'a> {
    example: &'a str,
    schedule: &'a BoundSchedule,
    envelope: Option<&'a StabilityEnvelope>,
    envelope_note: Option<String>,
    notes: &'a [String],
}

fn delta_tag(delta: f64) -> String {
    format!("delta{delta}")
}

fn bounds_cmd(cfg: &ExperimentConfig, out: &mut OutDir) -> Result<u8> {
    let bundle = build(cfg, out)?;
    if let Some(ce) = &bundle.rpi.falsified {
        return Err(Error::NotCertified(format!("invariant-set certificate is falsified at x = {:?}", ce.x.as_slice())));
    }
    bundle.excitation()?;
    let p = bundle.bound_problem();
    let x0 = bundle.x0_norm();
    let rows = cfg.schedule_rows.unwrap_or(cfg.horizon as u64);
    for &delta in &cfg.deltas {
        let s = BoundSchedule::compute(&p, delta, x0, rows, cfg.cap)?;
        let (env, note) = match (&bundle.lyapunov, s.condition_half.holds) {
            (Some(l), true) => (Some(stability_envelope(&p, &s, l, cfg.envelope)?), None),
            (None, _) => (None, Some(format!("no Lyapunov certificate: {}", bundle.notes.join("; ")))),
            (_, false) => (None, Some("condition at delta/2 fails".to_string())),
        };
        let tag = delta_tag(delta);
        let mut csv = Vec::new();
        schedule_csv(&s, env.as_ref(), &mut csv)?;
        out.write(&format!("schedule_{tag}.csv"), &csv)?;
        out.write_json(
            &format!("bounds_{tag}.json"),
            &BoundsOutput { example: &bundle.name, schedule: &s, envelope: env.as_ref(), envelope_note: note.clone(), notes: &bundle.notes },
        )?;
        let t = &s.times;
        println!("example {} | delta {delta} | cap {}", bundle.name, cfg.cap);
        println!(
            "  T_burn-in {} (dyadic upper {}) | T_converge {} (dyadic upper {}) | T_contained {}",
            t.burn_in,
            t.burn_in_upper.map_or("none".into(), |v| v.to_string()),
            t.converge,
            t.converge_upper.map_or("none".into(), |v| v.to_string()),
            t.contained
        );
        println!("  {}", verdict_line("error-bound condition", &s.condition));
        println!("  {}", verdict_line("stability condition", &s.condition_half));
        match (&env, note) {
            (Some(e), _) => println!("  envelope: T0 {} | c2 {:.4e} | eta(T0 + 1) {:.4e} | eta past the window {:.4e}", e.t0, e.c2, e.eta(e.t0 + 1), e.eta(u64::MAX)),
            (None, Some(n)) => println!("  envelope: not emitted ({n})"),
            (None, None) => {}
        }
    }
    Ok(EXIT_OK)
}

fn sweep_cmd(cfg: &ExperimentConfig, param: &str, values: &[f64], delta: f64, cap: u64, out: &mut OutDir) -> Result<u8> {
    let rows = sweep(cfg, param, values, delta, cap)?;
    let mut csv = Vec::new();
    sweep_csv(&rows, &mut csv)?;
    out.write("sweep.csv", &csv)?;
    let monotone = is_monotone(&rows);
    let flip = flip_index(&rows);
    out.write_json(
        "sweep.json",
        &json!({ "param": param, "delta": delta, "cap": cap, "monotone": monotone, "flip_index": flip, "rows": rows }),
    )?;
    println!("{param:>14} {:>6} {:>22} {:>22} {:>22} {:>12}", "holds", "T_converge", "T_converge upper", "T_contained", "e(1)");
    for r in &rows {
        println!(
            "{:>14} {:>6} {:>22} {:>22} {:>22} {:>12.4e}",
            r.value,
            r.holds,
            r.converge.to_string(),
            r.converge_upper.map_or("none".into(), |v| v.to_string()),
            r.contained.to_string(),
            r.e1
        );
    }
    match flip {
        Some(i) => println!("condition flips to true at {param} = {} (monotone: {monotone})", rows[i].value),
        None => println!("no false-to-true flip over the given values (monotone: {monotone})"),
    }
    Ok(EXIT_OK)
}
