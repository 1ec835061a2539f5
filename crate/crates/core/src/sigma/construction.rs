//! Multiplicative construction over a Brownian path and its compensator checks.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{martingale_test, MartingaleScore, PredictableFunctional, Probe};
use crate::error::{LabError, Result};
use crate::excursion::{zero_set, SignProcess, ZeroSet};
use crate::path::{DecomposedPath, Path};
use crate::seed::SeedSpec;
use crate::stochcalc::{check_balayage_with_zeros, tanaka_local_time, LocalTimePath};

/// Taper width `δ` for the drift integrand `u/B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Taper {
    pub delta: f64,
}

impl Taper {
    /// `δ = 10 √dt`.
    pub fn for_dt(dt: f64) -> Self {
        Taper {
            delta: 10.0 * dt.sqrt(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConstructedPath {
    /// `X` with `V = ∫ K z dL̂(B)` and `M = X - V`.
    pub path: DecomposedPath,
    /// Zero set of the driving path.
    pub zeros: ZeroSet,
    /// `z` evaluated at the last zero, `z_{γ_t}`.
    pub z_gamma: Path,
    pub local_time: LocalTimePath,
    pub taper: Taper,
}

/// `X_t = K_{g_t} z_{γ_t} |B_t| exp(∫_{γ_t}^t u (dB - ds/B) - ½ ∫_{γ_t}^t u² ds)`.
///
/// Integrals restart at every zero of `b` and skip the first step of each
/// excursion; `u` must respect `|u_k| ≤ bound · min(1, |B_k|/δ)` so the
/// `ds/B` term stays bounded.
pub fn construct_theorem31(
    z: &PredictableFunctional,
    u: &PredictableFunctional,
    b: &Path,
    k_signs: Option<&SignProcess>,
    taper: Option<Taper>,
) -> Result<ConstructedPath> {
    let grid = *b.grid();
    let dt = grid.dt();
    let taper = taper.unwrap_or_else(|| Taper::for_dt(dt));
    if !(taper.delta > 0.0) {
        return Err(LabError::param("taper.delta", "must be positive"));
    }
    if let Some(k) = k_signs {
        k.path().ensure_same_grid(b)?;
    }
    let zeros = zero_set(b, 0.0)?;
    if !zeros.contains(0) {
        return Err(LabError::NoPriorZero(b.values()[0]));
    }
    let lt = tanaka_local_time(b);
    let zv = z.evaluate(b, &lt)?;
    if let Some(k) = zv.iter().position(|&v| v < 0.0) {
        return Err(LabError::param("z", format!("negative value {} at index {k}", zv[k])));
    }
    let uv = u.evaluate(b, &lt)?;
    let bv = b.values();
    for k in 0..bv.len() {
        if zeros.contains(k) {
            continue;
        }
        let allowed = u.bound() * (bv[k].abs() / taper.delta).min(1.0);
        if uv[k].abs() > allowed * (1.0 + 1e-12) {
            return Err(LabError::TaperViolation {
                index: k,
                u: uv[k].abs(),
                allowed,
            });
        }
    }
    let sign_at = |k: usize| k_signs.map_or(1.0, |s| s.values()[k]);

    let n = bv.len();
    let mut x = vec![0.0; n];
    let mut z_gamma = vec![0.0; n];
    let mut gamma = 0;
    let mut w = 0.0;
    for k in 0..n {
        if zeros.contains(k) {
            gamma = k;
            w = 0.0;
        } else {
            if k > gamma + 1 {
                let j = k - 1;
                w += uv[j] * (bv[k] - bv[j] - dt / bv[j]) - 0.5 * uv[j] * uv[j] * dt;
            }
            x[k] = sign_at(gamma) * zv[gamma] * bv[k].abs() * w.exp();
        }
        z_gamma[k] = zv[gamma];
    }
    if let Some(k) = x.iter().position(|v| !v.is_finite()) {
        return Err(LabError::NonFinite { index: k, value: x[k] });
    }

    let lv = lt.values();
    let mut v = Vec::with_capacity(n);
    let mut acc = 0.0;
    v.push(acc);
    for k in 0..n - 1 {
        let dl = lv[k + 1] - lv[k];
        if dl != 0.0 {
            let zero_index = if zeros.contains(k) { k } else { k + 1 };
            acc += sign_at(zero_index) * zv[k] * dl;
        }
        v.push(acc);
    }
    let path = DecomposedPath::from_x_and_v(Path::new(grid, x)?, Path::new(grid, v)?)?;
    Ok(ConstructedPath {
        path,
        zeros,
        z_gamma: Path::new(grid, z_gamma)?,
        local_time: lt,
        taper,
    })
}

/// `|X| / z_γ`, guarded by the functional's declared lower bound.
pub fn rescale_by_z(x: &Path, z_gamma: &Path, z_min: f64) -> Result<Path> {
    if !(z_min > 0.0) {
        return Err(LabError::param("z_min", "a positive lower bound is required to divide by z"));
    }
    x.zip_with(z_gamma, |a, z| a.abs() / z.max(z_min))
}

/// `N_t = |x_t| - ∫ z f(L̂) dL̂(B)` for a single path, with `f ≡ 1` when absent.
fn compensated(x: &Path, zv: &[f64], lt: &LocalTimePath, f: Option<&BoundedFn>) -> Result<(Path, Path)> {
    let (xv, lv) = (x.values(), lt.values());
    let mut out = Vec::with_capacity(xv.len());
    let mut comp = Vec::with_capacity(xv.len());
    let mut acc = 0.0;
    for k in 0..xv.len() {
        if k > 0 {
            let fk = f.map_or(1.0, |f| f.eval(lv[k - 1]));
            acc += zv[k - 1] * fk * (lv[k] - lv[k - 1]);
        }
        let fk = f.map_or(1.0, |f| f.eval(lv[k]));
        out.push(fk * xv[k].abs() - acc);
        comp.push(acc);
    }
    Ok((Path::new(*x.grid(), out)?, Path::new(*x.grid(), comp)?))
}

fn test_grid_stride(n_steps: usize) -> usize {
    if n_steps % 2 == 0 {
        n_steps / 2
    } else {
        1
    }
}

/// Snapshots kept per path for the martingale regression.
struct Snapshot {
    n: Path,
    n_prime: Path,
    abs_b: Path,
    lt: Path,
    osc: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompensatorReport {
    /// `|X| - ∫ z dL̂(B)`.
    pub compensator: MartingaleScore,
    /// `|X| - z_γ |B|`.
    pub last_zero_variant: MartingaleScore,
    /// Largest within-excursion oscillation of the balayage remainder of `z_γ |B|`.
    pub balayage_oscillation: f64,
    /// Largest `|X|` seen on the zero set of `B`.
    pub max_abs_on_zero_set: f64,
    pub pass: bool,
}

/// Compensator checks over an ensemble. `source` produces `(X, B)` for each
/// seed `(master_seed, i)`; only a few samples per path are kept.
pub fn check_compensator<F>(z: &PredictableFunctional, master_seed: u64, n_paths: usize, source: F) -> Result<CompensatorReport>
where
    F: Fn(SeedSpec) -> Result<(Path, Path)> + Sync + Send,
{
    let snaps = crate::pathgen::par_ensemble(master_seed, n_paths, |seed| {
        let (x, b) = source(seed)?;
        x.ensure_same_grid(&b)?;
        let zeros = zero_set(&b, 0.0)?;
        let lt = tanaka_local_time(&b);
        let zv = z.evaluate(&b, &lt)?;
        let (n, _) = compensated(&x, &zv, &lt, None)?;
        let gamma = zeros.last_zero_indices();
        let zg: Vec<f64> = gamma.iter().map(|g| g.map_or(0.0, |g| zv[g])).collect();
        let zg = Path::new(*b.grid(), zg)?;
        let n_prime = Path::new(
            *b.grid(),
            (0..b.len())
                .map(|k| x.values()[k].abs() - zg.values()[k] * b.values()[k].abs())
                .collect(),
        )?;
        let on_zero = zeros
            .indices()
            .into_iter()
            .fold(0.0f64, |m, k| m.max(x.values()[k].abs()));
        let osc = check_balayage_with_zeros(&Path::new(*b.grid(), zv.clone())?, &b.abs(), &zeros, f64::INFINITY)?
            .sup_residual;
        let stride = test_grid_stride(b.grid().n_steps());
        Ok((
            Snapshot {
                n: n.coarsen(stride)?,
                n_prime: n_prime.coarsen(stride)?,
                abs_b: b.abs().coarsen(stride)?,
                lt: lt.path().coarsen(stride)?,
                osc,
            },
            on_zero,
        ))
    })?;
    let s = snaps[0].0.n.grid().n_steps() / 2;
    let abs_b: Vec<Path> = snaps.iter().map(|(s, _)| s.abs_b.clone()).collect();
    let lts: Vec<Path> = snaps.iter().map(|(s, _)| s.lt.clone()).collect();
    let probes = [
        Probe::Constant,
        Probe::at_index("abs_b", &abs_b, s),
        Probe::at_index("local_time", &lts, s),
    ];
    let ns: Vec<Path> = snaps.iter().map(|(s, _)| s.n.clone()).collect();
    let nps: Vec<Path> = snaps.iter().map(|(s, _)| s.n_prime.clone()).collect();
    let compensator = martingale_test(&ns, &probes)?;
    let last_zero_variant = martingale_test(&nps, &probes)?;
    let pass = compensator.pass && last_zero_variant.pass;
    Ok(CompensatorReport {
        compensator,
        last_zero_variant,
        balayage_oscillation: snaps.iter().map(|(s, _)| s.osc).fold(0.0, f64::max),
        max_abs_on_zero_set: snaps.iter().map(|(_, m)| *m).fold(0.0, f64::max),
        pass,
    })
}

/// A bounded Borel function of the local time, optionally vanishing beyond
/// `support` (i.e. `f(ℓ) = 0` for `ℓ > support`).
#[derive(Clone)]
pub struct BoundedFn {
    pub name: String,
    pub bound: f64,
    pub support: Option<f64>,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for BoundedFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BoundedFn")
            .field("name", &self.name)
            .field("bound", &self.bound)
            .field("support", &self.support)
            .finish()
    }
}

impl BoundedFn {
    pub fn new(
        name: impl Into<String>,
        bound: f64,
        support: Option<f64>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            bound,
            support,
            f: Arc::new(f),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("const({c})"), c.abs(), None, move |_| c)
    }

    /// `1{ℓ ≤ level}`.
    pub fn indicator_below(level: f64) -> Self {
        Self::new(format!("indicator(l<={level})"), 1.0, Some(level), move |l| {
            if l <= level {
                1.0
            } else {
                0.0
            }
        })
    }

    pub fn eval(&self, l: f64) -> f64 {
        (self.f)(l)
    }
}

#[derive(Debug, Clone)]
pub struct FTransform {
    /// `f(L̂_t) |X_t|` for the first path of the ensemble.
    pub sample: Path,
    /// `f(L̂)|X| - F̂` for the first path.
    pub sample_martingale: Path,
    pub score: MartingaleScore,
    /// Whether `|N_t| ≤ λKC + K|X_t|` held on every path and time, when `f`
    /// has compact support. `λ` is widened by the largest local-time step.
    pub ui_bound_holds: Option<bool>,
    pub ui_max_excess: f64,
}

/// Single-path `f`-transform: `(f(L̂)|X|, f(L̂)|X| - ∫ z f(L̂) dL̂)`.
pub fn f_transform_path(x: &Path, z: &PredictableFunctional, b: &Path, f: &BoundedFn) -> Result<(Path, Path)> {
    x.ensure_same_grid(b)?;
    let lt = tanaka_local_time(b);
    let zv = z.evaluate(b, &lt)?;
    let (n, _) = compensated(x, &zv, &lt, Some(f))?;
    let t = Path::new(
        *x.grid(),
        x.values()
            .iter()
            .zip(lt.values())
            .map(|(xv, l)| f.eval(*l) * xv.abs())
            .collect(),
    )?;
    Ok((t, n))
}

/// Martingale report of `f(L̂)|X| - F̂` over an ensemble drawn from `source`.
pub fn f_transform<F>(
    z: &PredictableFunctional,
    f: &BoundedFn,
    master_seed: u64,
    n_paths: usize,
    source: F,
) -> Result<FTransform>
where
    F: Fn(SeedSpec) -> Result<(Path, Path)> + Sync + Send,
{
    let k_bound = f.bound;
    let c_bound = z.bound();
    let rows = crate::pathgen::par_ensemble(master_seed, n_paths, |seed| {
        let (x, b) = source(seed)?;
        let (t, n) = f_transform_path(&x, z, &b, f)?;
        let lt = tanaka_local_time(&b);
        let max_dl = lt.increments().fold(0.0, f64::max);
        let excess = f.support.map(|lambda| {
            let lambda_eff = lambda + max_dl;
            n.values()
                .iter()
                .zip(x.values())
                .map(|(nv, xv)| nv.abs() - (lambda_eff * k_bound * c_bound + k_bound * xv.abs()))
                .fold(f64::NEG_INFINITY, f64::max)
        });
        let stride = test_grid_stride(b.grid().n_steps());
        let keep = if seed.stream_index == 0 { Some((t, n.clone())) } else { None };
        Ok((n.coarsen(stride)?, b.abs().coarsen(stride)?, lt.path().coarsen(stride)?, excess, keep))
    })?;
    let s = rows[0].0.grid().n_steps() / 2;
    let ns: Vec<Path> = rows.iter().map(|r| r.0.clone()).collect();
    let abs_b: Vec<Path> = rows.iter().map(|r| r.1.clone()).collect();
    let lts: Vec<Path> = rows.iter().map(|r| r.2.clone()).collect();
    let score = martingale_test(
        &ns,
        &[
            Probe::Constant,
            Probe::at_index("abs_b", &abs_b, s),
            Probe::at_index("local_time", &lts, s),
        ],
    )?;
    let ui_max_excess = rows
        .iter()
        .filter_map(|r| r.3)
        .fold(f64::NEG_INFINITY, f64::max);
    let ui_bound_holds = f.support.map(|_| ui_max_excess <= 1e-12);
    let (sample, sample_martingale) = rows.into_iter().find_map(|r| r.4).expect("stream 0 present");
    Ok(FTransform {
        sample,
        sample_martingale,
        score,
        ui_bound_holds,
        ui_max_excess,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZeroSetVerdict {
    /// Symmetric difference of the two zero sets as a fraction of indices.
    pub ratio: f64,
    /// `sup |V - L̂(B)|`, checked when `z_γ ≡ 1`.
    pub increasing_part_gap: Option<f64>,
    pub pass: bool,
}

/// Compare the zero set of `x` (including zeros hidden in `dV`) with that of `b`.
pub fn check_zero_set_coincidence(
    x: &DecomposedPath,
    b: &Path,
    z: &PredictableFunctional,
    tol: f64,
) -> Result<ZeroSetVerdict> {
    x.x.ensure_same_grid(b)?;
    let zb = zero_set(b, 0.0)?;
    let zx = crate::excursion::zero_set_decomposed(x, 0.0)?;
    let ratio = zx.symmetric_difference_ratio(&zb);
    let lt = tanaka_local_time(b);
    let zv = z.evaluate(b, &lt)?;
    let unit = zb.indices().iter().all(|&k| zv[k] == 1.0);
    let gap = unit.then(|| {
        x.v.values()
            .iter()
            .zip(lt.values())
            .fold(0.0f64, |m, (a, c)| m.max((a - c).abs()))
    });
    let pass = ratio <= tol && gap.is_none_or(|g| g <= 1e-9 * (1.0 + lt.last()));
    Ok(ZeroSetVerdict {
        ratio,
        increasing_part_gap: gap,
        pass,
    })
}
