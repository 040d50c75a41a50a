//! CSV and SVG artifacts. Column sets are fixed; see `docs/formats.md`.

use std::fmt::Write as _;
use std::io::Write;

use serde::Serialize;

use crate::bounds::{BoundSchedule, StabilityEnvelope};
use crate::error::{Error, Result};
use crate::sim::EnsembleStats;
use crate::sweep::SweepRow;

pub const ENSEMBLE_COLUMNS: [&str; 7] = ["t", "median_absx", "q90_absx", "median_err", "q90_err", "e_bound", "x_bar_bound"];
pub const SCHEDULE_COLUMNS: [&str; 7] = ["t", "w_bar", "x_bar", "z_bar", "beta_max", "e", "eta"];
pub const SWEEP_COLUMNS: [&str; 13] = [
    "value",
    "delta",
    "holds",
    "basis",
    "holds_half",
    "burn_in",
    "converge",
    "contained",
    "burn_in_upper",
    "converge_upper",
    "e1",
    "e1_prior",
    "reason",
];

fn io(e: impl std::fmt::Display) -> Error {
    Error::Numeric(format!("write failed: {e}"))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_rows<W: Write>(w: W, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(header).map_err(io)?;
    for r in rows {
        wr.write_record(&r).map_err(io)?;
    }
    wr.flush().map_err(io)
}

/// Bound columns aligned with the ensemble rows: `e(t)` for `t >= 1` and `x_bar(t)`.
#[derive(Debug, Clone, Default, Serialize)]
pub struct BoundColumns {
    pub e: Vec<Option<f64>>,
    pub x_bar: Vec<Option<f64>>,
}

pub fn ensemble_csv<W: Write>(stats: &EnsembleStats, bounds: &BoundColumns, w: W) -> Result<()> {
    let rows = (0..=stats.horizon).map(|t| {
        vec![
            t.to_string(),
            stats.median_abs_x[t].to_string(),
            stats.q90_abs_x[t].to_string(),
            stats.median_err[t].to_string(),
            stats.q90_err[t].to_string(),
            opt(bounds.e.get(t).copied().flatten()),
            opt(bounds.x_bar.get(t).copied().flatten()),
        ]
    });
    write_rows(w, &ENSEMBLE_COLUMNS, rows)
}

pub fn schedule_csv<W: Write>(s: &BoundSchedule, env: Option<&StabilityEnvelope>, w: W) -> Result<()> {
    let rows = s.rows.iter().map(|r| {
        vec![
            r.t.to_string(),
            r.w_bar.to_string(),
            r.x_bar.to_string(),
            opt(r.z_bar),
            opt(r.beta_max),
            opt(r.e),
            opt(env.map(|e| e.eta(r.t))),
        ]
    });
    write_rows(w, &SCHEDULE_COLUMNS, rows)
}

fn basis_name(row: &SweepRow) -> String {
    row.basis
        .and_then(|b| serde_json::to_value(b).ok())
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

pub fn sweep_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let it = rows.iter().map(|r| {
        vec![
            r.value.to_string(),
            r.delta.to_string(),
            r.holds.to_string(),
            basis_name(r),
            r.holds_half.to_string(),
            r.burn_in.to_string(),
            r.converge.to_string(),
            r.contained.to_string(),
            r.burn_in_upper.map(|v| v.to_string()).unwrap_or_default(),
            r.converge_upper.map(|v| v.to_string()).unwrap_or_default(),
            r.e1.to_string(),
            r.e1_prior.to_string(),
            r.reason.clone().unwrap_or_default(),
        ]
    });
    write_rows(w, &SWEEP_COLUMNS, it)
}

/// A named line for [`svg_chart`].
pub struct Series<'a> {
    pub name: &'a str,
    pub values: &'a [f64],
    pub color: &'a str,
}

const W: f64 = 720.0;
const H: f64 = 400.0;
const PAD: f64 = 56.0;
const MAX_POINTS: usize = 1500;

/// Self-contained SVG line chart against the sample index, with a linear y axis from zero.
pub fn svg_chart(title: &str, x_label: &str, series: &[Series<'_>]) -> String {
    let len = series.iter().map(|s| s.values.len()).max().unwrap_or(0).max(2);
    let y_max = series
        .iter()
        .flat_map(|s| s.values.iter().copied())
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE)
        * 1.05;
    let sx = |i: usize| PAD + (W - 2.0 * PAD) * i as f64 / (len - 1) as f64;
    let sy = |v: f64| H - PAD - (H - 2.0 * PAD) * (v / y_max).clamp(0.0, 1.0);
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        out,
        r#"<path d="M{PAD},{PAD} L{PAD},{b} L{r},{b}" stroke="black" fill="none"/>"#,
        b = H - PAD,
        r = W - PAD
    );
    for k in 0..=4 {
        let v = y_max * k as f64 / 4.0;
        let y = sy(v);
        let _ = writeln!(out, r#"<text x="{}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#, PAD - 6.0, y + 4.0, fmt_tick(v));
        let x = sx(((len - 1) as f64 * k as f64 / 4.0).round() as usize);
        let _ = writeln!(
            out,
            r#"<text x="{x:.1}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            H - PAD + 16.0,
            ((len - 1) as f64 * k as f64 / 4.0).round()
        );
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#, W / 2.0, H - 14.0, escape(x_label));
    for (j, s) in series.iter().enumerate() {
        let stride = s.values.len().div_ceil(MAX_POINTS).max(1);
        let mut d = String::new();
        for (i, v) in s.values.iter().enumerate().step_by(stride) {
            if !v.is_finite() {
                continue;
            }
            let _ = write!(d, "{}{:.1},{:.1}", if d.is_empty() { "M" } else { " L" }, sx(i), sy(*v));
        }
        let _ = writeln!(out, r#"<path d="{d}" stroke="{}" stroke-width="1.3" fill="none"/>"#, s.color);
        let ly = PAD + 16.0 * j as f64;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{ly:.1}" font-family="sans-serif" font-size="12" fill="{}" text-anchor="end">{}</text>"#,
            W - PAD,
            s.color,
            escape(s.name)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if (1e-2..1e4).contains(&v.abs()) {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
