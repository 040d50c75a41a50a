//! Experiment configuration: which example to build, parameter overrides and run settings.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bounds::EnvelopeOptions;
use crate::certify::ScanSettings;
use crate::error::{Error, Result};
use crate::examples::{build_linear, build_pwa, ExampleBundle, LinearExampleParams, PwaExampleParams};
use crate::excitation::ExcitationCertificate;
use crate::lyapunov::LyapunovCertificate;
use crate::rpi::RpiCertificate;
use crate::sim::SimSettings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleKind {
    Pwa,
    Linear,
}

impl ExampleKind {
    fn default_params(self) -> Value {
        match self {
            Self::Pwa => serde_json::to_value(PwaExampleParams::default()),
            Self::Linear => serde_json::to_value(LinearExampleParams::default()),
        }
        .expect("default parameters serialise")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub example: ExampleKind,
    /// Overrides of the example's default parameters.
    #[serde(default = "empty_object")]
    pub params: Value,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_trials")]
    pub n_trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Confidence levels evaluated by `bounds`.
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
    /// Search cap for the characteristic times.
    #[serde(default = "default_cap")]
    pub cap: u64,
    /// Rows written to the bound schedule; defaults to `horizon`.
    #[serde(default)]
    pub schedule_rows: Option<u64>,
    /// Certificate file written by `certify`; replaces the analytic certificates.
    #[serde(default)]
    pub certificates: Option<String>,
    #[serde(default)]
    pub envelope: EnvelopeOptions,
    #[serde(default)]
    pub scan: ScanSettings,
}

fn empty_object() -> Value {
    Value::Object(Default::default())
}
fn default_horizon() -> usize {
    10_000
}
fn default_trials() -> usize {
    100
}
fn default_deltas() -> Vec<f64> {
    vec![0.1]
}
fn default_cap() -> u64 {
    10_000_000
}

/// Certificates as written by `certify`, read back by `bounds`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateFile {
    pub example: String,
    pub excitation: Option<ExcitationCertificate>,
    pub rpi: Option<RpiCertificate>,
    pub lyapunov: Option<LyapunovCertificate>,
}

pub fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Config(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn new(example: ExampleKind) -> Self {
        Self {
            example,
            params: empty_object(),
            horizon: default_horizon(),
            n_trials: default_trials(),
            base_seed: 0,
            deltas: default_deltas(),
            cap: default_cap(),
            schedule_rows: None,
            certificates: None,
            envelope: EnvelopeOptions::default(),
            scan: ScanSettings::default(),
        }
    }

    /// Parse and validate; JSON errors carry line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.n_trials < 1 {
            return Err(Error::Config("n_trials must be at least 1".into()));
        }
        if self.deltas.is_empty() {
            return Err(Error::Config("deltas must not be empty".into()));
        }
        for &d in &self.deltas {
            check_delta(d)?;
        }
        if self.cap < 2 {
            return Err(Error::Config("cap must be at least 2".into()));
        }
        if !self.params.is_object() {
            return Err(Error::Config("params must be an object".into()));
        }
        let gamma = self.merged_params().get("gamma").and_then(Value::as_f64).unwrap_or(0.0);
        if !(gamma > 0.0) {
            return Err(Error::Config(format!("gamma must be positive, got {gamma}")));
        }
        Ok(())
    }

    /// Defaults overlaid with the configured overrides.
    pub fn merged_params(&self) -> Value {
        let mut base = self.example.default_params();
        if let (Some(b), Some(o)) = (base.as_object_mut(), self.params.as_object()) {
            for (k, v) in o {
                b.insert(k.clone(), v.clone());
            }
        }
        base
    }

    /// Names of the numeric parameters accepted by [`Self::with_param`].
    pub fn sweepable(&self) -> Vec<String> {
        let defaults = self.example.default_params();
        let mut names: Vec<String> = defaults
            .as_object()
            .map(|o| o.iter().filter(|(_, v)| v.is_number() || v.is_null()).map(|(k, _)| k.clone()).collect())
            .unwrap_or_default();
        names.sort();
        names
    }

    /// Copy with one numeric example parameter overridden.
    pub fn with_param(&self, name: &str, value: f64) -> Result<Self> {
        let names = self.sweepable();
        if !names.iter().any(|n| n == name) {
            return Err(Error::Config(format!("unknown or non-numeric parameter {name:?}; sweepable: {}", names.join(", "))));
        }
        let integer = self.example.default_params().get(name).is_some_and(|v| v.is_u64());
        let v = if integer {
            if !(value >= 0.0 && value.fract() == 0.0 && value <= u64::MAX as f64) {
                return Err(Error::Config(format!("{name} takes a non-negative integer, got {value}")));
            }
            Value::from(value as u64)
        } else {
            serde_json::Number::from_f64(value)
                .map(Value::Number)
                .ok_or_else(|| Error::Config(format!("{name} = {value} is not a finite number")))?
        };
        let mut out = self.clone();
        if let Some(o) = out.params.as_object_mut() {
            o.insert(name.to_string(), v);
        }
        out.validate()?;
        Ok(out)
    }

    pub fn sim_settings(&self) -> SimSettings {
        SimSettings { horizon: self.horizon, n_trials: self.n_trials, base_seed: self.base_seed, sequential: false }
    }

    /// Build the example, then apply the certificate file if one is configured.
    ///
    /// A configured but unreadable certificate file is a missing prerequisite.
    pub fn build(&self, base_dir: Option<&Path>) -> Result<ExampleBundle> {
        let params = self.merged_params();
        let mut bundle = match self.example {
            ExampleKind::Pwa => {
                let p: PwaExampleParams =
                    serde_json::from_value(params).map_err(|e| Error::Config(format!("pwa params: {e}")))?;
                build_pwa(&p)?
            }
            ExampleKind::Linear => {
                let p: LinearExampleParams =
                    serde_json::from_value(params).map_err(|e| Error::Config(format!("linear params: {e}")))?;
                build_linear(&p)?
            }
        };
        if let Some(path) = &self.certificates {
            let full = match base_dir {
                Some(b) => b.join(path),
                None => path.into(),
            };
            let text = std::fs::read_to_string(&full)
                .map_err(|e| Error::Missing(format!("certificate file {}: {e}", full.display())))?;
            let file: CertificateFile = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("certificate file {}: {e}", full.display())))?;
            apply_certificates(&mut bundle, file)?;
        }
        Ok(bundle)
    }
}

/// Replace the bundle's certificates with those from a file; absent entries clear the bundle's.
pub fn apply_certificates(bundle: &mut ExampleBundle, file: CertificateFile) -> Result<()> {
    if file.example != bundle.name {
        return Err(Error::Config(format!("certificates are for {:?}, config builds {:?}", file.example, bundle.name)));
    }
    bundle.excitation = file.excitation;
    if bundle.excitation.is_none() {
        bundle.notes.push("certificate file has no excitation certificate".into());
    }
    match file.rpi {
        Some(r) => bundle.rpi = r,
        None => return Err(Error::Missing("certificate file has no invariant-set certificate".into())),
    }
    match file.lyapunov {
        Some(l) => bundle.lyapunov = Some(l),
        None => {
            bundle.lyapunov = None;
            bundle.notes.push("certificate file has no Lyapunov certificate".into());
        }
    }
    Ok(())
}
