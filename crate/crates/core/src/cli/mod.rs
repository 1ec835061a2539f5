//! Command-line front end: `run`, `describe` and `version`.
//!
//! Exit codes: 0 all checks passed, 1 a check failed, 2 configuration error,
//! 3 internal error.

pub mod config;
pub mod suites;

use std::ffi::OsString;
use std::fs;
use std::path::{Path as FsPath, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use config::{ExperimentConfig, Family, Suite, Tolerances};
pub use suites::{CheckResult, CheckStatus};

use crate::error::{LabError, Result};
use crate::report::content_hash;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteReport {
    pub config: ExperimentConfig,
    pub checks: Vec<CheckResult>,
    pub pass: bool,
    pub content_hash: String,
    pub wall_time_ms: u64,
}

#[derive(Serialize)]
struct Hashed<'a> {
    config: &'a ExperimentConfig,
    checks: &'a [CheckResult],
}

/// Run the configured suite. The content hash covers config and checks only.
pub fn run_suite(cfg: &ExperimentConfig) -> Result<SuiteReport> {
    cfg.validate()?;
    let start = Instant::now();
    let checks = suites::run_checks(cfg)?;
    let pass = checks.iter().all(CheckResult::passed);
    let content_hash = content_hash(&Hashed { config: cfg, checks: &checks });
    Ok(SuiteReport {
        config: cfg.clone(),
        checks,
        pass,
        content_hash,
        wall_time_ms: start.elapsed().as_millis() as u64,
    })
}

/// Write `report.json`, `hash.txt` and every check's CSV artifacts into `dir`.
pub fn write_outputs(report: &SuiteReport, dir: &FsPath) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), serde_json::to_vec_pretty(report)?)?;
    fs::write(dir.join("hash.txt"), format!("{}\n", report.content_hash))?;
    for check in &report.checks {
        for a in &check.files {
            fs::write(dir.join(&a.file_name), &a.content)?;
        }
    }
    Ok(())
}

/// Human-readable description of what a suite checks.
pub fn describe(suite: Suite) -> String {
    let mut s = String::new();
    let t = Tolerances::default();
    let mut line = |name: &str, text: String| s.push_str(&format!("{name}\n    {text}\n"));
    if matches!(suite, Suite::SigmaVerify | Suite::All) {
        line("sigma.class_membership", format!(
            "X = M + V with dV carried by {{X = 0}}: |dV| mass off a {}·sqrt(dt) band is at most {} of the total, and M passes the martingale regression test (max |t| < 4).",
            t.band_sqrt_dt, t.carried_ratio));
        line("sigma.drift_control_rejected", "B_t + t must be rejected by the same test (score > 10).".into());
        line("sigma.abs_equals_abs_martingale", "|X| = K_g |M| off the zero set with K the excursion signs, and M is a martingale.".into());
        line("sigma.fair_flip_marginal", format!(
            "Flipping excursions of |B| with fair coins gives X_T ~ N(0, T): KS below max({}, 1% critical value).", t.ks));
        line("sigma.compensator", "f(L)|X| - int z f(L) dL is a martingale, also with L frozen at the last zero; the balayage residual is constant on excursions.".into());
        line("sigma.zero_set_coincidence", "X and B share their zero set (symmetric difference ratio below 0.01).".into());
    }
    if matches!(suite, Suite::Identities | Suite::All) {
        line("identity.tanaka", "|B_t| = int sgn(B) dB + L_t: median sup residual strictly decreases under grid refinement.".into());
        line("identity.excursion_flip.alpha=<a>", format!(
            "Z^a X = int Z dM + (2a - 1) L(Z^a X) for a in {{0, 1/2, 1}}: residual decreases under refinement and the finest median is below {}.", t.eq3_residual));
        line("identity.balayage", format!(
            "k_g Y - int k_g dY is constant on every excursion, for k constant and k = 1/(1 + L): oscillation at most {:e}.", t.balayage));
        line("identity.local_time_estimators", format!(
            "Occupation, downcrossing and Tanaka local times agree within {} relative and average sqrt(2T/pi) within {}.",
            t.local_time_relative, t.local_time_mean));
    }
    if matches!(suite, Suite::Estimates | Suite::All) {
        line("estimate.exceedance.u=<u>", format!(
            "P(sup_t |B_t| / phi(L_t) > 1 before L = u) = 1 - exp(-int_0^u dx/phi(x)), within {} or 3 standard errors.", t.allowance));
        line("estimate.exceedance_scaled.u=<u>", "The same law for a constructed process with boundary scaled by z at the last zero.".into());
        line("estimate.boundary_identity", "At T_phi = inf{t : phi(L_t)|B_t| > 1}, phi(L_T)|B_T| = 1 up to discretization.".into());
        line("estimate.azema_nested", "P(no zero in (t, T] | B_t = b) = 2 Phi(|b| / sqrt(T - t)) - 1 against nested simulation, within 3 standard errors.".into());
        line("estimate.last_zero_law", "The last zero before 1 of B and of its flipped version coincide pathwise and follow the arcsine law.".into());
    }
    if matches!(suite, Suite::Representation | Suite::All) {
        line("representation.<x>", format!(
            "X_t = E[X_T 1{{no zero in (t, T]}} | F_t] by nested simulation for X = |B|, the Azema process and 0: median deviation below {}.",
            t.representation));
        line("representation.product.<x>", "R|X| is a martingale when <X, R> vanishes; otherwise the case is reported only.".into());
    }
    s
}

#[derive(Parser, Debug)]
#[command(name = "sigma-lab", about = "Simulation laboratory for processes whose drift lives on their zero set")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a suite and write report.json, hash.txt and CSV artifacts.
    Run {
        /// Suite to run (overrides the config's `suite`).
        suite: Option<String>,
        /// JSON experiment configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Use the fine grid and large ensemble.
        #[arg(long)]
        heavy: bool,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Describe the checks of a suite.
    Describe {
        #[arg(default_value = "all")]
        suite: String,
    },
    /// Print the version.
    Version,
}

/// Config keys settable with `--key=value`: any dotted path plus the
/// top-level leaves.
fn is_override_key(key: &str) -> bool {
    key.contains('.') || matches!(key, "phi" | "suite" | "output_dir")
}

/// Separate `--a.b=value` overrides from the arguments clap understands.
fn split_overrides(args: Vec<OsString>) -> Result<(Vec<OsString>, Vec<(String, Value)>)> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    for a in args {
        match a.to_str() {
            Some(s) if s.starts_with("--") && s.contains('=') && is_override_key(s[2..].split('=').next().unwrap_or("")) => {
                overrides.push(config::parse_override(s)?);
            }
            _ => rest.push(a),
        }
    }
    Ok((rest, overrides))
}

fn load_file(path: &FsPath) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|e| LabError::Config {
        key: "--config".into(),
        message: format!("{}: {e}", path.display()),
    })?;
    serde_json::from_str(&text).map_err(|e| LabError::Config {
        key: "--config".into(),
        message: format!("{}: {e}", path.display()),
    })
}

fn exit_code_for(e: &LabError) -> i32 {
    match e {
        LabError::Config { .. } | LabError::InvalidParameter { .. } | LabError::InvalidGrid(..) => EXIT_CONFIG,
        _ => EXIT_INTERNAL,
    }
}

/// Entry point shared by the binary and tests; returns the process exit code.
pub fn main_with_args(args: impl IntoIterator<Item = OsString>) -> i32 {
    let (rest, overrides) = match split_overrides(args.into_iter().collect()) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let cli = match Cli::try_parse_from(rest) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_PASS };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::Version => {
            println!("sigma-lab {}", env!("CARGO_PKG_VERSION"));
            EXIT_PASS
        }
        Command::Describe { suite } => match suite.parse::<Suite>() {
            Ok(s) => {
                print!("{}", describe(s));
                EXIT_PASS
            }
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_CONFIG
            }
        },
        Command::Run { suite, config, heavy, out } => match run_command(suite, config, heavy, out, overrides) {
            Ok(code) => code,
            Err(e) => {
                eprintln!("error: {e}");
                exit_code_for(&e)
            }
        },
    }
}

fn run_command(
    suite: Option<String>,
    config: Option<PathBuf>,
    heavy: bool,
    out: Option<PathBuf>,
    mut overrides: Vec<(String, Value)>,
) -> Result<i32> {
    let file = config.as_deref().map(load_file).transpose()?;
    if let Some(s) = suite {
        let s: Suite = s.parse()?;
        overrides.push(("suite".into(), Value::String(s.name().into())));
    }
    let cfg = config::resolve(file, heavy, &overrides)?;
    let dir = out
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(format!("sigma-lab-out/{}", cfg.suite)));
    let report = run_suite(&cfg)?;
    write_outputs(&report, &dir)?;
    for c in &report.checks {
        let status = match c.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Reported => "INFO",
            CheckStatus::Skipped => "SKIP",
        };
        println!("{status:4} {}", c.name);
    }
    println!("hash {}", report.content_hash);
    println!("report {}", dir.join("report.json").display());
    Ok(if report.pass { EXIT_PASS } else { EXIT_CHECK_FAILED })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn dotted_flags_become_overrides() {
        let (rest, ov) = split_overrides(os(&["sigma-lab", "run", "--ensemble.n_paths=10", "--heavy"])).unwrap();
        assert_eq!(rest, os(&["sigma-lab", "run", "--heavy"]));
        assert_eq!(ov, vec![("ensemble.n_paths".to_string(), Value::from(10))]);
        let (rest, ov) = split_overrides(os(&["sigma-lab", "run", "--phi={\"kind\":\"constant\",\"c\":2}", "--out=x"])).unwrap();
        assert_eq!(rest, os(&["sigma-lab", "run", "--out=x"]));
        assert_eq!(ov[0].0, "phi");
        assert_eq!(ov[0].1["c"], Value::from(2));
    }

    #[test]
    fn unknown_suite_is_a_config_error() {
        assert_eq!(main_with_args(os(&["sigma-lab", "describe", "nope"])), EXIT_CONFIG);
        assert_eq!(main_with_args(os(&["sigma-lab", "bogus"])), EXIT_CONFIG);
    }

    #[test]
    fn describe_mentions_every_suite_check() {
        let d = describe(Suite::All);
        for key in ["sigma.class_membership", "identity.tanaka", "estimate.boundary_identity", "representation.product"] {
            assert!(d.contains(key), "{key}");
        }
    }
}
