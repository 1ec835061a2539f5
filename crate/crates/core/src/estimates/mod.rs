//! Monte Carlo estimates of exceedance laws indexed by Brownian local time,
//! and last-passage representations.

mod last_passage;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::path::{Path, TimeGrid};
use crate::pathgen::{gen_brownian, par_ensemble, sgn, BrownianStream};
use crate::seed::SeedSpec;
use crate::sigma::{construct_theorem31, PredictableFunctional, Taper};
use crate::stats::{adaptive_simpson, binomial_stderr};
use crate::stochcalc::LocalTimePath;

pub use last_passage::{
    arcsine_cdf, azema_submartingale, azema_value, honest_time_law, nested_no_zero_probability, representation_check,
    rx_product_martingale, HonestTimeReport, NestedEstimate, RepresentationConfig, RepresentationReport, RxReport, RxSpec,
    XSpec,
};

/// A positive Borel function `φ` with a closed-form `∫₀ᵘ dx/φ(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhiSpec {
    /// `φ ≡ c`.
    Constant { c: f64 },
    /// `φ(x) = e^{rate·x}`.
    Exponential { rate: f64 },
    /// `φ(x) = a + b·x`.
    Linear { a: f64, b: f64 },
    /// `φ(x) = low` for `x < threshold`, `high` afterwards.
    Step { low: f64, threshold: f64, high: f64 },
}

impl PhiSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            PhiSpec::Constant { c } => c > 0.0 && c.is_finite(),
            PhiSpec::Exponential { rate } => rate.is_finite(),
            PhiSpec::Linear { a, b } => a > 0.0 && b >= 0.0 && a.is_finite() && b.is_finite(),
            PhiSpec::Step { low, threshold, high } => {
                low > 0.0 && high > 0.0 && threshold >= 0.0 && low.is_finite() && high.is_finite() && threshold.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(LabError::param("phi", format!("{self:?} is not a positive finite function")))
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            PhiSpec::Constant { c } => c,
            PhiSpec::Exponential { rate } => (rate * x).exp(),
            PhiSpec::Linear { a, b } => a + b * x,
            PhiSpec::Step { low, threshold, high } => {
                if x < threshold {
                    low
                } else {
                    high
                }
            }
        }
    }

    /// `∫₀ᵘ dx/φ(x)` in closed form.
    pub fn integral_to(&self, u: f64) -> f64 {
        match *self {
            PhiSpec::Constant { c } => u / c,
            PhiSpec::Exponential { rate } => {
                if rate == 0.0 {
                    u
                } else {
                    -(-rate * u).exp_m1() / rate
                }
            }
            PhiSpec::Linear { a, b } => {
                if b == 0.0 {
                    u / a
                } else {
                    (b * u / a).ln_1p() / b
                }
            }
            PhiSpec::Step { low, threshold, high } => u.min(threshold) / low + (u - threshold).max(0.0) / high,
        }
    }

    /// `∫₀ᵘ dx/φ(x)` by adaptive quadrature, split at any discontinuity.
    pub fn integral_numeric(&self, u: f64) -> f64 {
        let f = |x: f64| 1.0 / self.eval(x);
        match *self {
            PhiSpec::Step { threshold, .. } if threshold < u => {
                adaptive_simpson(&f, 0.0, threshold, 1e-13) + adaptive_simpson(&f, threshold, u, 1e-13)
            }
            _ => adaptive_simpson(&f, 0.0, u, 1e-13),
        }
    }

    /// Whether `∫₀^∞ dx/φ = ∞`.
    pub fn diverges(&self) -> bool {
        !matches!(*self, PhiSpec::Exponential { rate } if rate > 0.0)
    }

    /// `1 - exp(-∫₀ᵘ dx/φ)`.
    pub fn exceedance_closed_form(&self, u: f64) -> f64 {
        -(-self.integral_to(u)).exp_m1()
    }
}

/// First grid time at which `l` exceeds `u`.
pub fn inverse_local_time(l: &LocalTimePath, u: f64) -> Option<f64> {
    l.values().iter().position(|&v| v > u).map(|k| l.grid().time(k))
}

/// Probability estimate against its closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub theorem: String,
    pub phi_spec: PhiSpec,
    pub u: f64,
    pub n_paths: usize,
    pub dt: f64,
    pub empirical: f64,
    pub closed_form: f64,
    pub stderr: f64,
    pub allowance: f64,
    pub pass: bool,
    /// Fraction of paths on which the event was decided (`τ_u` or an
    /// exceedance reached before the horizon cap).
    pub reached_fraction: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

/// Ensemble parameters for the streaming estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub dt: f64,
    pub n_paths: usize,
    pub master_seed: u64,
    /// Cap on simulated time per path.
    pub max_horizon: f64,
}

/// Per-path outcome of an exceedance run.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Outcome {
    /// `L̂` one step before the first exceedance, if any.
    exceed_at: Option<f64>,
    /// `L̂` when the path stopped.
    final_lt: f64,
}

impl Outcome {
    fn decided(&self, u: f64) -> bool {
        self.exceed_at.is_some() || self.final_lt > u
    }

    /// The exceedance happened no later than `τ_u`.
    fn event(&self, u: f64) -> bool {
        self.exceed_at.is_some_and(|l| l <= u)
    }
}

const REACHED_REQUIRED: f64 = 0.99;

fn summarize(
    theorem: &str,
    phi: PhiSpec,
    us: &[f64],
    cfg: &EnsembleConfig,
    allowance: f64,
    outcomes: &[Outcome],
) -> Vec<EstimateReport> {
    let n = outcomes.len();
    us.iter()
        .map(|&u| {
            let hits = outcomes.iter().filter(|o| o.event(u)).count();
            let decided = outcomes.iter().filter(|o| o.decided(u)).count();
            let empirical = hits as f64 / n as f64;
            let closed_form = phi.exceedance_closed_form(u);
            let stderr = binomial_stderr(empirical, n);
            let reached_fraction = decided as f64 / n as f64;
            let mut flags = Vec::new();
            if reached_fraction < REACHED_REQUIRED {
                flags.push("horizon_too_short".to_string());
            }
            let pass = (empirical - closed_form).abs() <= 3.0 * stderr + allowance && flags.is_empty();
            EstimateReport {
                theorem: theorem.to_string(),
                phi_spec: phi,
                u,
                n_paths: n,
                dt: cfg.dt,
                empirical,
                closed_form,
                stderr,
                allowance,
                pass,
                reached_fraction,
                flags,
            }
        })
        .collect()
}

fn check_levels(us: &[f64]) -> Result<f64> {
    if us.is_empty() || us.iter().any(|u| !(u.is_finite() && *u > 0.0)) {
        return Err(LabError::param("u", "levels must be positive and finite"));
    }
    Ok(us.iter().cloned().fold(0.0, f64::max))
}

fn max_steps(cfg: &EnsembleConfig) -> Result<u64> {
    if !(cfg.dt > 0.0 && cfg.max_horizon >= cfg.dt) {
        return Err(LabError::param("max_horizon", "must cover at least one step"));
    }
    Ok((cfg.max_horizon / cfg.dt).round() as u64)
}

/// `P(∃ t ≤ τ_u : |B_t| > φ(L̂_t))` against `1 - exp(-∫₀ᵘ dx/φ)` for each
/// level in `us`, all from one ensemble so estimates are nested in `u`.
///
/// Each path is simulated until its first exceedance, until `L̂` passes the
/// largest level, or until `max_horizon`.
pub fn exceedance_probability(phi: PhiSpec, us: &[f64], cfg: &EnsembleConfig, allowance: f64) -> Result<Vec<EstimateReport>> {
    phi.validate()?;
    let u_max = check_levels(us)?;
    let cap = max_steps(cfg)?;
    let outcomes = par_ensemble(cfg.master_seed, cfg.n_paths, |seed| {
        let mut s = BrownianStream::new(cfg.dt, seed)?;
        let (mut b, mut l) = (0.0f64, 0.0f64);
        for _ in 0..cap {
            let prev = b;
            b = s.step();
            let l_prev = l;
            l += tanaka_increment(prev, b);
            if b.abs() > phi.eval(l) {
                return Ok(Outcome {
                    exceed_at: Some(l_prev),
                    final_lt: l,
                });
            }
            if l > u_max {
                break;
            }
        }
        Ok(Outcome {
            exceed_at: None,
            final_lt: l,
        })
    })?;
    Ok(summarize("exceedance_law", phi, us, cfg, allowance, &outcomes))
}

/// The same law for `X` from the multiplicative construction, with the
/// boundary scaled by `z_γ`: the event is `|X_t| > z_{γ_t} φ(L̂_t)`.
///
/// Paths are built on a horizon that doubles (regenerating the same stream)
/// until the event is decided or `max_horizon` is reached.
pub fn exceedance_probability_scaled(
    phi: PhiSpec,
    us: &[f64],
    cfg: &EnsembleConfig,
    allowance: f64,
    z: &PredictableFunctional,
    u_drift: &PredictableFunctional,
) -> Result<Vec<EstimateReport>> {
    phi.validate()?;
    let u_max = check_levels(us)?;
    max_steps(cfg)?;
    let outcomes = par_ensemble(cfg.master_seed, cfg.n_paths, |seed| {
        let mut horizon = 4.0f64.min(cfg.max_horizon);
        loop {
            let grid = TimeGrid::with_horizon(cfg.dt, horizon)?;
            let b = gen_brownian(grid, seed)?;
            let t = construct_theorem31(z, u_drift, &b, None, Some(Taper::for_dt(cfg.dt)))?;
            let (xv, zg, lv) = (t.path.x.values(), t.z_gamma.values(), t.local_time.values());
            for k in 1..xv.len() {
                if xv[k].abs() > zg[k] * phi.eval(lv[k]) {
                    return Ok(Outcome {
                        exceed_at: Some(lv[k - 1]),
                        final_lt: lv[k],
                    });
                }
                if lv[k] > u_max {
                    return Ok(Outcome {
                        exceed_at: None,
                        final_lt: lv[k],
                    });
                }
            }
            if horizon >= cfg.max_horizon {
                return Ok(Outcome {
                    exceed_at: None,
                    final_lt: t.local_time.last(),
                });
            }
            horizon = (2.0 * horizon).min(cfg.max_horizon);
        }
    })?;
    Ok(summarize("exceedance_law_scaled", phi, us, cfg, allowance, &outcomes))
}

#[inline]
pub(crate) fn tanaka_increment(prev: f64, next: f64) -> f64 {
    if prev == 0.0 {
        next.abs()
    } else {
        (next.abs() - sgn(prev) * next).max(0.0)
    }
}

/// `T_φ = inf{t : φ(L̂_t) |B_t| > 1}` and the boundary value `|B_T| φ(L̂_T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingOutcome {
    pub time: Option<f64>,
    pub index: Option<u64>,
    /// `|B_T| φ(L̂_T)`, which should exceed 1 by at most a grid overshoot.
    pub boundary_value: Option<f64>,
    pub local_time: f64,
    /// Not reached on the available horizon.
    pub unreached: bool,
}

/// `T_φ` on a given path.
pub fn t_phi_stopping(phi: PhiSpec, b: &Path) -> Result<StoppingOutcome> {
    phi.validate()?;
    let v = b.values();
    let mut l = 0.0;
    for k in 0..v.len() {
        if k > 0 {
            l += tanaka_increment(v[k - 1], v[k]);
        }
        let p = phi.eval(l) * v[k].abs();
        if p > 1.0 {
            return Ok(StoppingOutcome {
                time: Some(b.grid().time(k)),
                index: Some(k as u64),
                boundary_value: Some(p),
                local_time: l,
                unreached: false,
            });
        }
    }
    Ok(StoppingOutcome {
        time: None,
        index: None,
        boundary_value: None,
        local_time: l,
        unreached: true,
    })
}

/// `T_φ` on a freshly streamed path, extended until it is reached or
/// `max_horizon` runs out.
pub fn t_phi_stopping_stream(phi: PhiSpec, dt: f64, seed: SeedSpec, max_horizon: f64) -> Result<StoppingOutcome> {
    phi.validate()?;
    let cap = (max_horizon / dt).round() as u64;
    let mut s = BrownianStream::new(dt, seed)?;
    let (mut b, mut l) = (0.0f64, 0.0f64);
    for k in 1..=cap {
        let prev = b;
        b = s.step();
        l += tanaka_increment(prev, b);
        let p = phi.eval(l) * b.abs();
        if p > 1.0 {
            return Ok(StoppingOutcome {
                time: Some(k as f64 * dt),
                index: Some(k),
                boundary_value: Some(p),
                local_time: l,
                unreached: false,
            });
        }
    }
    Ok(StoppingOutcome {
        time: None,
        index: None,
        boundary_value: None,
        local_time: l,
        unreached: true,
    })
}

/// Boundary identity `|B_{T_φ}| φ(L̂_{T_φ}) ∈ [1, 1 + 3√dt]` over an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    pub phi_spec: PhiSpec,
    pub n_paths: usize,
    pub dt: f64,
    pub reached: usize,
    /// Fraction of reached paths whose boundary value lies in `[1, 1 + 3√dt]`.
    pub within_fraction: f64,
    pub max_overshoot: f64,
    pub pass: bool,
}

pub fn boundary_identity(phi: PhiSpec, cfg: &EnsembleConfig) -> Result<BoundaryReport> {
    let outs = par_ensemble(cfg.master_seed, cfg.n_paths, |seed| {
        t_phi_stopping_stream(phi, cfg.dt, seed, cfg.max_horizon)
    })?;
    let hi = 1.0 + 3.0 * cfg.dt.sqrt();
    let vals: Vec<f64> = outs.iter().filter_map(|o| o.boundary_value).collect();
    let within = vals.iter().filter(|&&v| (1.0..=hi).contains(&v)).count();
    let within_fraction = if vals.is_empty() { 0.0 } else { within as f64 / vals.len() as f64 };
    Ok(BoundaryReport {
        phi_spec: phi,
        n_paths: cfg.n_paths,
        dt: cfg.dt,
        reached: vals.len(),
        within_fraction,
        max_overshoot: vals.iter().map(|v| v - 1.0).fold(0.0, f64::max),
        pass: !vals.is_empty() && within_fraction >= 0.99,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochcalc::tanaka_local_time;

    #[test]
    fn closed_forms_match_quadrature() {
        let phis = [
            PhiSpec::Constant { c: 1.0 },
            PhiSpec::Constant { c: 2.5 },
            PhiSpec::Exponential { rate: 1.0 },
            PhiSpec::Exponential { rate: -0.3 },
            PhiSpec::Linear { a: 0.5, b: 2.0 },
            PhiSpec::Step { low: 0.5, threshold: 0.7, high: 3.0 },
        ];
        for phi in phis {
            for u in [0.1, 1.0, 2.0, 7.5] {
                let (a, q) = (phi.integral_to(u), phi.integral_numeric(u));
                assert!((a - q).abs() <= 1e-9 * a.abs().max(1e-300), "{phi:?} u={u}: {a} vs {q}");
            }
        }
    }

    #[test]
    fn closed_form_values() {
        let one = PhiSpec::Constant { c: 1.0 };
        assert!((one.exceedance_closed_form(1.0) - 0.632_120_558_828_557_7).abs() < 1e-15);
        assert!((one.exceedance_closed_form(0.5) - 0.393_469_340_287_366_6).abs() < 1e-15);
        assert!((one.exceedance_closed_form(2.0) - 0.864_664_716_763_387_3).abs() < 1e-15);
        assert!(one.exceedance_closed_form(1e-9) < 1e-8);
        let e = PhiSpec::Exponential { rate: 1.0 };
        assert!((e.exceedance_closed_form(50.0) - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!(!e.diverges() && one.diverges());
        let mut prev = 0.0;
        for i in 0..100 {
            let v = PhiSpec::Linear { a: 1.0, b: 0.5 }.integral_to(i as f64 * 0.1);
            assert!(v >= prev);
            prev = v;
        }
        assert!(PhiSpec::Constant { c: 0.0 }.validate().is_err());
    }

    #[test]
    fn inverse_local_time_examples() {
        let g = TimeGrid::new(0.1, 6).unwrap();
        let b = Path::new(g, vec![0.0, 0.0, 0.0, 0.3, -0.2, 0.1, 0.4]).unwrap();
        let l = tanaka_local_time(&b);
        // first increase at index 3
        assert_eq!(inverse_local_time(&l, 0.0), Some(g.time(3)));
        assert_eq!(inverse_local_time(&l, l.last()), None);
        let u = 0.35;
        let tau = inverse_local_time(&l, u).unwrap();
        let at = l.at_time(tau);
        let max_dl = l.increments().fold(0.0, f64::max);
        assert!(at >= u && at <= u + max_dl);
    }

    #[test]
    fn exceedance_is_monotone_in_level() {
        let cfg = EnsembleConfig {
            dt: 1e-3,
            n_paths: 600,
            master_seed: 3,
            max_horizon: 50.0,
        };
        let phi = PhiSpec::Constant { c: 1.0 };
        let reps = exceedance_probability(phi, &[0.25, 0.5, 1.0, 2.0], &cfg, 0.05).unwrap();
        for w in reps.windows(2) {
            assert!(w[0].empirical <= w[1].empirical);
        }
        for r in &reps {
            assert!(r.reached_fraction >= 0.99);
            assert!((r.empirical - r.closed_form).abs() < 0.1, "{r:?}");
        }
    }

    #[test]
    fn stopping_examples() {
        let phi = PhiSpec::Constant { c: 1.0 };
        let o = t_phi_stopping_stream(phi, 1e-4, SeedSpec::new(1, 0), 100.0).unwrap();
        let v = o.boundary_value.unwrap();
        assert!(v > 1.0 && v <= 1.0 + 3.0 * 1e-2);
        // 1/φ astronomically large until L̂ reaches 10
        let tiny = PhiSpec::Step {
            low: 1e-6,
            threshold: 10.0,
            high: 1.0,
        };
        let o = t_phi_stopping_stream(tiny, 1e-3, SeedSpec::new(1, 0), 5.0).unwrap();
        assert!(o.unreached && o.time.is_none());
        let b = gen_brownian(TimeGrid::with_horizon(1e-4, 20.0).unwrap(), SeedSpec::new(1, 0)).unwrap();
        let on_path = t_phi_stopping(phi, &b).unwrap();
        let streamed = t_phi_stopping_stream(phi, 1e-4, SeedSpec::new(1, 0), 20.0).unwrap();
        assert_eq!(on_path.index, streamed.index);
    }
}
