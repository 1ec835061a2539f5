//! Experiment configuration: JSON file, `--heavy` profile and dotted overrides.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{LabError, Result};
use crate::estimates::PhiSpec;
use crate::path::TimeGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    SigmaVerify,
    Identities,
    Estimates,
    Representation,
    All,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::SigmaVerify,
        Suite::Identities,
        Suite::Estimates,
        Suite::Representation,
        Suite::All,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::SigmaVerify => "sigma-verify",
            Suite::Identities => "identities",
            Suite::Estimates => "estimates",
            Suite::Representation => "representation",
            Suite::All => "all",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| LabError::Config {
                key: "suite".into(),
                message: format!(
                    "unknown suite `{s}` (expected one of {})",
                    Suite::ALL.map(|s| s.name()).join(", ")
                ),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dt: f64,
    pub n_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub n_paths: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Brownian,
    Reflected,
    Drawdown,
    Constructed,
}

/// Parameters of the multiplicative construction (ignored by other families).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProcessParams {
    /// Constant value of `z`.
    pub z: f64,
    /// Scale `c` of the tapered drift `u = c·min(1, |B|/δ)`.
    pub u: f64,
    /// Taper width `δ`; `10·√dt` when absent.
    pub taper_delta: Option<f64>,
}

impl Default for ProcessParams {
    fn default() -> Self {
        Self {
            z: 1.0,
            u: 0.5,
            taper_delta: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessConfig {
    pub family: Family,
    #[serde(default)]
    pub params: ProcessParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Largest admissible share of `|dV|` off the zero band.
    pub carried_ratio: f64,
    /// Zero band as a multiple of `√dt`.
    pub band_sqrt_dt: f64,
    /// Median sup residual of the excursion-flip decomposition at the finest grid.
    pub eq3_residual: f64,
    /// Pairwise relative gap between local-time estimators.
    pub local_time_relative: f64,
    /// Absolute tolerance on `E L̂_1` against `√(2/π)`.
    pub local_time_mean: f64,
    /// Discretization allowance added to `3·stderr` for probability estimates.
    pub allowance: f64,
    /// KS distance tolerance.
    pub ks: f64,
    /// Within-excursion oscillation of the balayage remainder.
    pub balayage: f64,
    /// Median normalized deviation of nested Monte Carlo.
    pub representation: f64,
    /// Threshold on the ensemble-mean cross-variation `⟨X, R⟩`.
    pub cross_variation: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            carried_ratio: 0.05,
            band_sqrt_dt: 2.0,
            eq3_residual: 0.05,
            local_time_relative: 0.10,
            local_time_mean: 0.03,
            allowance: 0.02,
            ks: 0.02,
            balayage: 1e-10,
            representation: 1.5,
            cross_variation: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub suite: Suite,
    pub grid: GridConfig,
    pub ensemble: EnsembleSection,
    pub process: ProcessConfig,
    #[serde(default)]
    pub phi: Option<PhiSpec>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output_dir: Option<String>,
}

impl ExperimentConfig {
    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.grid.dt, self.grid.n_steps).map_err(|e| LabError::Config {
            key: "grid".into(),
            message: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        if self.ensemble.n_paths == 0 {
            return Err(config_err("ensemble.n_paths", "must be at least 1"));
        }
        if let Some(phi) = &self.phi {
            phi.validate().map_err(|e| config_err("phi", e.to_string()))?;
        }
        let p = &self.process.params;
        if !(p.z > 0.0 && p.z.is_finite()) {
            return Err(config_err("process.params.z", "must be positive"));
        }
        if !p.u.is_finite() {
            return Err(config_err("process.params.u", "must be finite"));
        }
        if p.taper_delta.is_some_and(|d| !(d > 0.0)) {
            return Err(config_err("process.params.taper_delta", "must be positive"));
        }
        Ok(())
    }
}

fn config_err(key: &str, message: impl Into<String>) -> LabError {
    LabError::Config {
        key: key.into(),
        message: message.into(),
    }
}

/// Desk-scale profile: `dt = 1e-4` on `[0, 1]`, 2000 paths.
pub fn default_value() -> Value {
    json!({
        "suite": "all",
        "grid": { "dt": 1e-4, "n_steps": 10000 },
        "ensemble": { "n_paths": 2000, "master_seed": 20240101u64 },
        "process": { "family": "reflected" },
    })
}

/// Heavy profile overrides: `dt = 1e-5` on `[0, 1]`, 10⁴ paths.
pub fn heavy_overrides() -> Vec<(String, Value)> {
    vec![
        ("grid.dt".into(), json!(1e-5)),
        ("grid.n_steps".into(), json!(100000)),
        ("ensemble.n_paths".into(), json!(10000)),
    ]
}

/// Parses `key.path=value`; the value is read as JSON when possible and as a
/// string otherwise.
pub fn parse_override(arg: &str) -> Result<(String, Value)> {
    let body = arg.trim_start_matches("--");
    let (key, raw) = body
        .split_once('=')
        .ok_or_else(|| config_err(body, "override needs the form --key.path=value"))?;
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(config_err(key, "malformed key"));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

/// Sets `value` at a dotted path, creating intermediate objects.
pub fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = root;
    for (i, part) in parts.iter().enumerate() {
        if !cur.is_object() {
            if cur.is_null() {
                *cur = Value::Object(Map::new());
            } else {
                return Err(config_err(&parts[..i].join("."), "is not an object"));
            }
        }
        let obj = cur.as_object_mut().expect("object");
        if i + 1 == parts.len() {
            obj.insert((*part).to_string(), value);
            return Ok(());
        }
        cur = obj.entry((*part).to_string()).or_insert(Value::Null);
    }
    unreachable!("keys have at least one part")
}

/// Merge `overlay` into `base`, recursing into objects.
fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, o) => *b = o,
    }
}

/// Builds the configuration: defaults, then the file, then `--heavy`, then
/// dotted overrides (later sources win).
pub fn resolve(file: Option<Value>, heavy: bool, overrides: &[(String, Value)]) -> Result<ExperimentConfig> {
    let mut v = default_value();
    if let Some(f) = file {
        if !f.is_object() {
            return Err(config_err("<root>", "config must be a JSON object"));
        }
        merge(&mut v, f);
    }
    if heavy {
        for (k, val) in heavy_overrides() {
            set_path(&mut v, &k, val)?;
        }
    }
    for (k, val) in overrides {
        set_path(&mut v, k, val.clone())?;
    }
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(v).map_err(|e| {
        let key = e.path().to_string();
        LabError::Config {
            key: if key == "." { "<root>".into() } else { key },
            message: e.into_inner().to_string(),
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve() {
        let c = resolve(None, false, &[]).unwrap();
        assert_eq!(c.suite, Suite::All);
        assert_eq!(c.grid.dt, 1e-4);
        assert_eq!(c.ensemble.n_paths, 2000);
        let h = resolve(None, true, &[]).unwrap();
        assert_eq!((h.grid.dt, h.grid.n_steps, h.ensemble.n_paths), (1e-5, 100000, 10000));
    }

    #[test]
    fn overrides_win() {
        let o = vec![
            parse_override("--ensemble.n_paths=1000").unwrap(),
            parse_override("--suite=identities").unwrap(),
            parse_override("--phi.kind=constant").unwrap(),
            parse_override("--phi.c=2").unwrap(),
        ];
        let c = resolve(None, true, &o).unwrap();
        assert_eq!(c.ensemble.n_paths, 1000);
        assert_eq!(c.suite, Suite::Identities);
        assert_eq!(c.phi, Some(PhiSpec::Constant { c: 2.0 }));
    }

    #[test]
    fn errors_name_the_key() {
        let o = vec![parse_override("--ensemble.n_paths=lots").unwrap()];
        match resolve(None, false, &o) {
            Err(LabError::Config { key, .. }) => assert_eq!(key, "ensemble.n_paths"),
            other => panic!("{other:?}"),
        }
        let o = vec![parse_override("--grid.dx=1").unwrap()];
        match resolve(None, false, &o) {
            Err(LabError::Config { key, message }) => {
                assert!(key.starts_with("grid"), "{key}");
                assert!(message.contains("dx"));
            }
            other => panic!("{other:?}"),
        }
        let o = vec![parse_override("--grid.dt=-1").unwrap()];
        assert!(matches!(resolve(None, false, &o), Err(LabError::Config { .. })));
        assert!(parse_override("--novalue").is_err());
        assert!("nope".parse::<Suite>().is_err());
    }
}
