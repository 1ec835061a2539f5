//! Class-(Σ) constructions and verifiers.
//!
//! A decomposed path `X = M + V` is in class (Σ) when `dV` is carried by the
//! zero set of `X`. The verifiers here check the carrying property directly,
//! certify martingale parts statistically and reproduce the transformations
//! that keep a process inside the class.

mod martingale;
mod construction;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::excursion::{make_z_alpha, sign_k, zero_set_decomposed, ExcursionSet, SignProcess, ZeroSet};
use crate::path::{DecomposedPath, Path, TimeGrid};
use crate::report::IdentityReport;
use crate::seed::{domain, SeedSpec};
use crate::stochcalc::{ito_integral, tanaka_local_time};

pub use martingale::{martingale_test, martingale_test_at, MartingaleScore, Probe, ProbeStat, MARTINGALE_THRESHOLD};
pub use construction::{
    check_compensator, check_zero_set_coincidence, construct_theorem31, f_transform, f_transform_path, rescale_by_z, BoundedFn,
    CompensatorReport, FTransform, Taper, ConstructedPath, ZeroSetVerdict,
};

/// Arguments visible to a [`PredictableFunctional`] at index `k`: the driving
/// path and its local time, truncated to indices `0..=k`.
#[derive(Debug, Clone, Copy)]
pub struct Prefix<'a> {
    pub grid: TimeGrid,
    pub b: &'a [f64],
    pub local_time: &'a [f64],
}

impl Prefix<'_> {
    pub fn index(&self) -> usize {
        self.b.len() - 1
    }

    pub fn time(&self) -> f64 {
        self.grid.time(self.index())
    }

    pub fn b_now(&self) -> f64 {
        self.b[self.index()]
    }

    pub fn local_time_now(&self) -> f64 {
        self.local_time[self.index()]
    }
}

type Evaluator = dyn Fn(&Prefix<'_>) -> f64 + Send + Sync;

/// A bounded functional of the past, evaluated one index at a time.
#[derive(Clone)]
pub struct PredictableFunctional {
    name: String,
    bound: f64,
    z_min: f64,
    eval: Arc<Evaluator>,
}

impl fmt::Debug for PredictableFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PredictableFunctional")
            .field("name", &self.name)
            .field("bound", &self.bound)
            .field("z_min", &self.z_min)
            .finish()
    }
}

impl PredictableFunctional {
    pub fn new(
        name: impl Into<String>,
        bound: f64,
        eval: impl Fn(&Prefix<'_>) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            bound,
            z_min: 0.0,
            eval: Arc::new(eval),
        }
    }

    pub fn constant(c: f64) -> Self {
        let mut f = Self::new(format!("const({c})"), c.abs(), move |_| c);
        f.z_min = c;
        f
    }

    /// `f(L̂_k)` for a function of the local time.
    pub fn of_local_time(
        name: impl Into<String>,
        bound: f64,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self::new(name, bound, move |p| f(p.local_time_now()))
    }

    /// `c · min(1, |B_k| / δ)`: bounded, and vanishing linearly at zeros of `B`.
    pub fn tapered(c: f64, delta: f64) -> Self {
        Self::new(format!("tapered({c},{delta})"), c.abs(), move |p| {
            c * (p.b_now().abs() / delta).min(1.0)
        })
    }

    /// Declares a lower bound used when dividing by the functional.
    pub fn with_lower_bound(mut self, z_min: f64) -> Self {
        self.z_min = z_min;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn lower_bound(&self) -> f64 {
        self.z_min
    }

    /// Values along `b`, each computed from the prefix up to its index and
    /// checked against the declared bound.
    pub fn evaluate(&self, b: &Path, local_time: &Path) -> Result<Vec<f64>> {
        b.ensure_same_grid(local_time)?;
        let grid = *b.grid();
        let (bv, lv) = (b.values(), local_time.values());
        (0..bv.len())
            .map(|k| {
                let v = (self.eval)(&Prefix {
                    grid,
                    b: &bv[..=k],
                    local_time: &lv[..=k],
                });
                if !v.is_finite() || v.abs() > self.bound * (1.0 + 1e-12) {
                    return Err(LabError::param(
                        "functional",
                        format!("{} = {v} at index {k} exceeds its declared bound {}", self.name, self.bound),
                    ));
                }
                Ok(v)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SigmaVerdict {
    pub carried_ratio: f64,
    pub martingale_score: Option<MartingaleScore>,
    pub residual: IdentityReport,
    pub pass: bool,
}

/// Mass of `|dV|` on steps with both endpoints outside the zero band, and the
/// total mass. A step touching the band is carried by it, since on a grid the
/// zero set is only seen at the sample before or after the hit.
pub fn carried_mass(x: &DecomposedPath, band: f64) -> (f64, f64) {
    let (xv, vv) = (x.x.values(), x.v.values());
    let mut off = 0.0;
    let mut total = 0.0;
    for k in 0..xv.len() - 1 {
        let dv = (vv[k + 1] - vv[k]).abs();
        total += dv;
        if xv[k].abs().min(xv[k + 1].abs()) > band {
            off += dv;
        }
    }
    (off, total)
}

pub fn carried_ratio(x: &DecomposedPath, band: f64) -> f64 {
    let (off, total) = carried_mass(x, band);
    if total == 0.0 {
        0.0
    } else {
        off / total
    }
}

/// Ensemble class-(Σ) check: pooled carried ratio of `dV` off the zero band,
/// the martingale score of `M`, and the decomposition residual `x - m - v`.
pub fn check_sigma(ensemble: &[DecomposedPath], band: f64, tol: f64) -> Result<SigmaVerdict> {
    if ensemble.is_empty() {
        return Err(LabError::DegenerateEnsemble("empty ensemble".into()));
    }
    check_sigma_with(ensemble.len(), 0, band, tol, |seed| Ok(ensemble[seed.stream_index as usize].clone()))
}

/// [`check_sigma`] over paths drawn from `source` for seeds
/// `(master_seed, 0..n_paths)`, keeping only a few samples of each.
pub fn check_sigma_with<F>(n_paths: usize, master_seed: u64, band: f64, tol: f64, source: F) -> Result<SigmaVerdict>
where
    F: Fn(SeedSpec) -> Result<DecomposedPath> + Sync + Send,
{
    if !(band >= 0.0) {
        return Err(LabError::param("band", format!("must be non-negative, got {band}")));
    }
    let rows = crate::pathgen::par_ensemble(master_seed, n_paths, |seed| {
        let d = source(seed)?;
        let (off, total) = carried_mass(&d, band);
        let r = d.x.zip_with(&d.m, |a, b| a - b)?.zip_with(&d.v, |a, b| a - b)?;
        let n = d.grid().n_steps();
        let m = if n % 2 == 0 { d.m.coarsen(n / 2)? } else { d.m.clone() };
        let first = (seed.stream_index == 0).then(|| r.clone());
        Ok((off, total, r.sup_abs(), d.x.sup_abs(), m, first))
    })?;
    let off: f64 = rows.iter().map(|r| r.0).sum();
    let total: f64 = rows.iter().map(|r| r.1).sum();
    let carried_ratio = if total == 0.0 { 0.0 } else { off / total };
    let worst = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    let scale = rows.iter().map(|r| r.3).fold(1.0, f64::max);
    let sample = rows.iter().find_map(|r| r.5.clone()).expect("stream 0 present");
    let mut residual = IdentityReport::from_residual("decomposition", &sample, 1e-12 * scale);
    residual.sup_residual = worst;
    residual.pass = worst <= residual.tolerance;
    let ms: Vec<Path> = rows.into_iter().map(|r| r.4).collect();
    let score = martingale_test(&ms, &[Probe::Constant, Probe::Level])?;
    let pass = carried_ratio <= tol && score.pass && residual.pass;
    Ok(SigmaVerdict {
        carried_ratio,
        martingale_score: Some(score),
        residual,
        pass,
    })
}

/// Output of [`z_transform`].
#[derive(Debug, Clone)]
pub struct ZTransform {
    /// `Y = Z^α X` with `M = Y - V` and `V = (2α - 1) L̂(Y)`.
    pub path: DecomposedPath,
    pub z: SignProcess,
    /// `∫ Z^α dM` from the input's martingale part.
    pub integral: Path,
    /// `Y - ∫ Z^α dM - V`.
    pub residual: IdentityReport,
}

/// Excursions of a decomposed path, including the zeros hidden in `dV`.
pub fn excursions_of(x: &DecomposedPath) -> Result<(ZeroSet, ExcursionSet)> {
    let zeros = zero_set_decomposed(x, 0.0)?;
    let exc = ExcursionSet::from_zero_set(&x.x, &zeros);
    Ok((zeros, exc))
}

/// Flip each excursion of `x` to `+` with probability `α`, using the
/// excursion-sign stream derived from `seed`.
pub fn z_transform(x: &DecomposedPath, alpha: f64, seed: SeedSpec) -> Result<ZTransform> {
    let (_, exc) = excursions_of(x)?;
    let z = make_z_alpha(&exc, alpha, seed.derive(domain::EXCURSION_SIGNS))?;
    let y = z.path().zip_with(&x.x, |a, b| a * b)?;
    let integral = ito_integral(z.path(), &x.m)?;
    let lt = tanaka_local_time(&y);
    let v = lt.map(|l| (2.0 * alpha - 1.0) * l)?;
    let r = Path::new(
        *y.grid(),
        (0..y.len())
            .map(|k| y.values()[k] - integral.values()[k] - v.values()[k])
            .collect(),
    )?;
    let residual = IdentityReport::from_residual("z_alpha_decomposition", &r, 0.05)
        .with_component("z_x", y.clone())
        .with_component("ito_z_dm", integral.clone())
        .with_component("v", v.clone())
        .with_statistic("alpha", alpha);
    let path = DecomposedPath::from_x_and_v(y, v)?;
    Ok(ZTransform {
        path,
        z,
        integral,
        residual,
    })
}

/// `M = Z^{1/2} X` and the two pathwise facts about it: `|X| = |M|` off the
/// zero set and `X = K_g |M|`, with `K` the right-limit sign of `X`.
///
/// The report's residual is `X - K_g |M|`; `|X| - |M|` is reported as
/// statistics split into the parts off and on the zero set (on a grid `X`
/// is only approximately zero at the detected zeros).
pub fn abs_equals_abs_martingale(x: &DecomposedPath, seed: SeedSpec) -> Result<(Path, IdentityReport)> {
    let t = z_transform(x, 0.5, seed)?;
    let m = t.path.x.clone();
    let (zeros, exc) = excursions_of(x)?;
    let k = sign_k(&x.x, &exc)?;
    let gamma = zeros.last_zero_indices();
    let (xv, mv, kv) = (x.x.values(), m.values(), k.values());
    let mut off_zero: f64 = 0.0;
    let mut on_zero: f64 = 0.0;
    let mut recon = Vec::with_capacity(xv.len());
    for i in 0..xv.len() {
        let d = (xv[i].abs() - mv[i].abs()).abs();
        if zeros.contains(i) {
            on_zero = on_zero.max(d);
            recon.push(0.0);
        } else {
            off_zero = off_zero.max(d);
            // before the first zero the excursion's own sign plays K_g
            let kg = gamma[i].map_or(kv[i], |g| kv[g]);
            recon.push(xv[i] - kg * mv[i].abs());
        }
    }
    let r = Path::new(*x.grid(), recon)?;
    let report = IdentityReport::from_residual("abs_equals_abs_martingale", &r, 0.0)
        .with_component("m", m.clone())
        .with_statistic("abs_gap_off_zero_set", off_zero)
        .with_statistic("abs_gap_on_zero_set", on_zero);
    let report = IdentityReport {
        pass: report.pass && off_zero == 0.0,
        ..report
    };
    Ok((m, report))
}
