//! Regression test for the martingale property across an ensemble.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::path::Path;
use crate::stats::ols_hc1;

/// Score threshold below which an ensemble is accepted as a martingale.
pub const MARTINGALE_THRESHOLD: f64 = 4.0;

/// A past-measurable regressor evaluated at the earlier time `s`.
#[derive(Debug, Clone)]
pub enum Probe {
    Constant,
    /// The tested process itself, `N_s`.
    Level,
    /// `|N_s|`.
    AbsLevel,
    /// Values supplied per path (one value at `s` for each ensemble member).
    Values { name: String, values: Vec<f64> },
}

impl Probe {
    /// Values of an auxiliary ensemble at grid index `s`.
    pub fn at_index(name: impl Into<String>, paths: &[Path], s: usize) -> Probe {
        Probe::Values {
            name: name.into(),
            values: paths.iter().map(|p| p.values()[s]).collect(),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Probe::Constant => "const".into(),
            Probe::Level => "level".into(),
            Probe::AbsLevel => "abs_level".into(),
            Probe::Values { name, .. } => name.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeStat {
    pub name: String,
    pub coef: f64,
    pub t_stat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleScore {
    pub score: f64,
    pub pass: bool,
    pub n_paths: usize,
    pub s: f64,
    pub t: f64,
    pub probes: Vec<ProbeStat>,
    /// Probes removed because they were constant across the ensemble.
    pub dropped: Vec<String>,
    /// Every increment was exactly zero.
    pub degenerate: bool,
    /// Fewer than a thousand paths.
    pub underpowered: bool,
}

/// Regress `N_t - N_s` on the probes at `s` and report the largest robust
/// t-statistic. A martingale has no predictable increment, so every
/// coefficient should be insignificant.
pub fn martingale_test_at(ensemble: &[Path], probes: &[Probe], s: usize, t: usize) -> Result<MartingaleScore> {
    let first = ensemble
        .first()
        .ok_or_else(|| LabError::DegenerateEnsemble("empty ensemble".into()))?;
    if s >= t || t >= first.len() {
        return Err(LabError::param("s,t", format!("need s < t <= n_steps, got s={s}, t={t}")));
    }
    for p in ensemble {
        first.ensure_same_grid(p)?;
    }
    let n = ensemble.len();
    let y: Vec<f64> = ensemble.iter().map(|p| p.values()[t] - p.values()[s]).collect();
    let grid = *first.grid();
    let mut out = MartingaleScore {
        score: 0.0,
        pass: true,
        n_paths: n,
        s: grid.time(s),
        t: grid.time(t),
        probes: Vec::new(),
        dropped: Vec::new(),
        degenerate: false,
        underpowered: n < 1000,
    };
    if y.iter().all(|&v| v == 0.0) {
        out.degenerate = true;
        return Ok(out);
    }

    let mut names = Vec::new();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for probe in probes {
        let col: Vec<f64> = match probe {
            Probe::Constant => vec![1.0; n],
            Probe::Level => ensemble.iter().map(|p| p.values()[s]).collect(),
            Probe::AbsLevel => ensemble.iter().map(|p| p.values()[s].abs()).collect(),
            Probe::Values { values, .. } => {
                if values.len() != n {
                    return Err(LabError::LengthMismatch {
                        expected: n,
                        actual: values.len(),
                    });
                }
                values.clone()
            }
        };
        let constant = col.iter().all(|&v| v == col[0]);
        if constant && !matches!(probe, Probe::Constant) {
            out.dropped.push(probe.name());
            continue;
        }
        names.push(probe.name());
        cols.push(col);
    }
    if cols.is_empty() {
        return Err(LabError::DegenerateEnsemble("no usable probes".into()));
    }
    let fit = ols_hc1(&y, &cols)?;
    out.probes = names
        .into_iter()
        .zip(fit.coef.iter().zip(&fit.t))
        .map(|(name, (&coef, &t_stat))| ProbeStat { name, coef, t_stat })
        .collect();
    out.score = fit.t.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    out.pass = out.score < MARTINGALE_THRESHOLD;
    Ok(out)
}

/// [`martingale_test_at`] with `s` at mid-horizon and `t` at the horizon.
pub fn martingale_test(ensemble: &[Path], probes: &[Probe]) -> Result<MartingaleScore> {
    let n = ensemble
        .first()
        .ok_or_else(|| LabError::DegenerateEnsemble("empty ensemble".into()))?
        .grid()
        .n_steps();
    martingale_test_at(ensemble, probes, n / 2, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::TimeGrid;
    use crate::pathgen::gen_brownian_ensemble;

    #[test]
    fn brownian_passes_and_drift_fails() {
        let g = TimeGrid::new(0.01, 100).unwrap();
        let bs = gen_brownian_ensemble(g, 17, 4000).unwrap();
        let r = martingale_test(&bs, &[Probe::Constant, Probe::Level]).unwrap();
        assert!(r.pass, "{r:?}");
        let drifted: Vec<Path> = bs
            .iter()
            .map(|b| b.zip_with(&Path::from_fn(g, |t| t).unwrap(), |a, c| a + c).unwrap())
            .collect();
        let r = martingale_test(&drifted, &[Probe::Constant]).unwrap();
        assert!(r.score > 10.0 && !r.pass);
    }

    #[test]
    fn zero_ensemble_is_degenerate_but_passes() {
        let g = TimeGrid::new(0.1, 10).unwrap();
        let zs = vec![Path::constant(g, 0.0).unwrap(); 10];
        let r = martingale_test(&zs, &[Probe::Constant, Probe::Level]).unwrap();
        assert!(r.degenerate && r.pass);
    }

    #[test]
    fn constant_probes_are_dropped() {
        let g = TimeGrid::new(0.01, 100).unwrap();
        let bs = gen_brownian_ensemble(g, 3, 200).unwrap();
        let probe = Probe::Values {
            name: "flat".into(),
            values: vec![0.0; 200],
        };
        let r = martingale_test(&bs, &[Probe::Constant, probe]).unwrap();
        assert_eq!(r.dropped, vec!["flat".to_string()]);
        assert!(r.underpowered);
    }
}
