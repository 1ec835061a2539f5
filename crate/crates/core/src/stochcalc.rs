//! Discrete stochastic calculus on uniform grids.
//!
//! All integrals are left-point sums, so an integrand evaluated at index `k`
//! only sees the past up to `t_k`.

use std::ops::Deref;

use crate::error::{LabError, Result};
use crate::excursion::{zero_set, ZeroSet};
use crate::path::{DecomposedPath, Path};
use crate::pathgen::sgn;
use crate::report::IdentityReport;

/// Overshoot constant `-ζ(1/2)/√(2π)` of a Gaussian random walk over a level.
pub const CROSSING_OVERSHOOT: f64 = 0.582_597_157_939_010_6;

/// `I_0 = 0`, `I_{k+1} = I_k + h_k (x_{k+1} - x_k)`.
pub fn ito_integral(h: &Path, x: &Path) -> Result<Path> {
    h.ensure_same_grid(x)?;
    Ok(Path::from_parts(*x.grid(), ito_sum(h.values(), x.values())))
}

pub(crate) fn ito_sum(h: &[f64], x: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    let mut acc = 0.0;
    out.push(acc);
    for k in 0..x.len() - 1 {
        acc += h[k] * (x[k + 1] - x[k]);
        out.push(acc);
    }
    out
}

pub fn quadratic_variation(x: &Path) -> Path {
    let mut out = Vec::with_capacity(x.len());
    let mut acc = 0.0;
    out.push(acc);
    for w in x.values().windows(2) {
        acc += (w[1] - w[0]).powi(2);
        out.push(acc);
    }
    Path::from_parts(*x.grid(), out)
}

/// Running cross-variation `Σ Δx Δy`.
pub fn cross_variation(x: &Path, y: &Path) -> Result<Path> {
    x.ensure_same_grid(y)?;
    let (xv, yv) = (x.values(), y.values());
    let mut out = Vec::with_capacity(xv.len());
    let mut acc = 0.0;
    out.push(acc);
    for k in 0..xv.len() - 1 {
        acc += (xv[k + 1] - xv[k]) * (yv[k + 1] - yv[k]);
        out.push(acc);
    }
    Ok(Path::from_parts(*x.grid(), out))
}

/// Estimated local time at zero: starts at 0 and never decreases.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTimePath(Path);

impl LocalTimePath {
    fn from_increments(x: &Path, increments: impl Iterator<Item = f64>) -> Self {
        let mut out = Vec::with_capacity(x.len());
        let mut acc = 0.0;
        out.push(acc);
        for d in increments {
            acc += d;
            out.push(acc);
        }
        LocalTimePath(Path::from_parts(*x.grid(), out))
    }

    pub fn path(&self) -> &Path {
        &self.0
    }

    pub fn into_path(self) -> Path {
        self.0
    }

    /// Step increments `L_{k+1} - L_k`.
    pub fn increments(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.values().windows(2).map(|w| w[1] - w[0])
    }
}

impl Deref for LocalTimePath {
    type Target = Path;

    fn deref(&self) -> &Path {
        &self.0
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(LabError::param("eps", format!("must be positive, got {eps}")));
    }
    Ok(())
}

/// `(1/2ε) ∫ 1{|x_s| ≤ ε} ds`, left-point.
pub fn local_time_occupation(x: &Path, eps: f64) -> Result<LocalTimePath> {
    check_eps(eps)?;
    let w = x.dt() / (2.0 * eps);
    let v = x.values();
    Ok(LocalTimePath::from_increments(
        x,
        v[..v.len() - 1].iter().map(|xk| if xk.abs() <= eps { w } else { 0.0 }),
    ))
}

/// Completed downcrossings of `[0, ε]` by `|x|`, scaled by the crossing width.
///
/// A crossing is armed when `|x_k| ≥ ε` and completes at the next index of the
/// zero set. On a grid both levels are only seen after overshooting them by
/// about `CROSSING_OVERSHOOT·√dt`, so the count is scaled by the effective
/// width `ε + 2·CROSSING_OVERSHOOT·√dt` rather than `ε`.
pub fn local_time_downcrossing(x: &Path, eps: f64) -> Result<LocalTimePath> {
    let zeros = zero_set(x, 0.0)?;
    local_time_downcrossing_with_zeros(x, eps, &zeros)
}

pub fn local_time_downcrossing_with_zeros(x: &Path, eps: f64, zeros: &ZeroSet) -> Result<LocalTimePath> {
    check_eps(eps)?;
    let width = eps + 2.0 * CROSSING_OVERSHOOT * x.dt().sqrt();
    let v = x.values();
    let mut armed = v[0].abs() >= eps;
    let incs = (1..v.len()).map(|k| {
        let mut d = 0.0;
        if zeros.contains(k) && armed {
            d = width;
            armed = false;
        }
        if v[k].abs() >= eps {
            armed = true;
        }
        d
    });
    Ok(LocalTimePath::from_increments(x, incs.collect::<Vec<_>>().into_iter()))
}

/// Discrete Tanaka local time `|y_t| - |y_0| - ∫ sgn(y) dy`.
///
/// Each step contributes `|y_{k+1}| - sgn(y_k) y_{k+1}` (or `|y_{k+1}|` from
/// an exact zero), which is exactly zero unless the step leaves or crosses
/// zero, so the result is nondecreasing without rounding slack.
pub fn tanaka_local_time(y: &Path) -> LocalTimePath {
    let v = y.values();
    LocalTimePath::from_increments(
        y,
        v.windows(2).map(|w| {
            if w[0] == 0.0 {
                w[1].abs()
            } else {
                (w[1].abs() - sgn(w[0]) * w[1]).max(0.0)
            }
        }),
    )
}

/// The finite-variation part of `|B|`'s decomposition, checked to be
/// nondecreasing within `10·√dt`.
pub fn local_time_tanaka(x: &DecomposedPath) -> Result<LocalTimePath> {
    let tol = 10.0 * x.grid().dt().sqrt();
    if let Some(k) = x.v.values().windows(2).position(|w| w[1] - w[0] < -tol) {
        return Err(LabError::param(
            "x",
            format!("finite-variation part decreases at index {k}; not a local-time path"),
        ));
    }
    Ok(LocalTimePath(x.v.clone()))
}

/// `|B_t| - ∫ sgn(B) dB - L̂_t` with the occupation estimator at `eps`.
pub fn check_tanaka(b: &Path, eps: f64, tolerance: f64) -> Result<IdentityReport> {
    let abs_b = b.abs();
    let sgn_b = b.map(sgn)?;
    let integral = ito_integral(&sgn_b, b)?;
    let lt = local_time_occupation(b, eps)?;
    let b0 = abs_b.values()[0];
    let residual = Path::new(
        *b.grid(),
        (0..b.len())
            .map(|k| abs_b.values()[k] - b0 - integral.values()[k] - lt.values()[k])
            .collect(),
    )?;
    Ok(IdentityReport::from_residual("tanaka", &residual, tolerance)
        .with_component("abs_b", abs_b)
        .with_component("ito_sgn_integral", integral)
        .with_component("local_time", lt.into_path())
        .with_statistic("eps", eps))
}

/// `R_t = k_{γ_t} y_t - ∫ k_{γ_s} dy_s` with `γ` the last zero of `y`.
pub fn balayage_residual(k: &Path, y: &Path, zeros: &ZeroSet) -> Result<Path> {
    k.ensure_same_grid(y)?;
    if !zeros.contains(0) {
        return Err(LabError::NoPriorZero(y.values()[0]));
    }
    let gamma = zeros.last_zero_indices();
    let k_at_gamma: Vec<f64> = gamma.iter().map(|g| k.values()[g.expect("zero at 0")]).collect();
    let integral = ito_sum(&k_at_gamma, y.values());
    Path::new(
        *y.grid(),
        (0..y.len())
            .map(|i| k_at_gamma[i] * y.values()[i] - integral[i])
            .collect(),
    )
}

/// Largest oscillation of `r` over any excursion interval `[g_n, d_n)` of `zeros`.
pub fn max_excursion_oscillation(r: &Path, zeros: &ZeroSet) -> (f64, Vec<f64>) {
    let v = r.values();
    let mut osc = Vec::new();
    let mut k = 0;
    while k < v.len() {
        if zeros.contains(k) && (k + 1 >= v.len() || zeros.contains(k + 1)) {
            k += 1;
            continue;
        }
        // interval from this zero (or the start) through the last nonzero index
        let start = k;
        let (mut lo, mut hi) = (v[k], v[k]);
        k += 1;
        while k < v.len() && !zeros.contains(k) {
            lo = lo.min(v[k]);
            hi = hi.max(v[k]);
            k += 1;
        }
        if k > start + 1 || !zeros.contains(start) {
            osc.push(hi - lo);
        }
    }
    let max = osc.iter().cloned().fold(0.0, f64::max);
    (max, osc)
}

/// Balayage check: `R` must be constant on every excursion of `y`.
pub fn check_balayage(k: &Path, y: &Path, tolerance: f64) -> Result<IdentityReport> {
    let zeros = zero_set(y, 0.0)?;
    check_balayage_with_zeros(k, y, &zeros, tolerance)
}

pub fn check_balayage_with_zeros(k: &Path, y: &Path, zeros: &ZeroSet, tolerance: f64) -> Result<IdentityReport> {
    let r = balayage_residual(k, y, zeros)?;
    let (max_osc, osc) = max_excursion_oscillation(&r, zeros);
    let rms = if osc.is_empty() {
        0.0
    } else {
        (osc.iter().map(|o| o * o).sum::<f64>() / osc.len() as f64).sqrt()
    };
    let tv: f64 = r.values().windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    Ok(IdentityReport {
        identity_name: "balayage".into(),
        grid: *y.grid(),
        sup_residual: max_osc,
        l2_residual: rms,
        pass: max_osc <= tolerance,
        tolerance,
        components: vec![crate::report::Component::new("r", r)],
        statistics: Default::default(),
    }
    .with_statistic("total_variation", tv)
    .with_statistic("excursions", osc.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::TimeGrid;
    use crate::pathgen::{gen_brownian, gen_reflected};
    use crate::seed::SeedSpec;

    fn unit(values: &[f64]) -> Path {
        Path::new(TimeGrid::new(1.0, values.len() - 1).unwrap(), values.to_vec()).unwrap()
    }

    fn bm(dt: f64, seed: u64, i: u64) -> Path {
        gen_brownian(TimeGrid::with_horizon(dt, 1.0).unwrap(), SeedSpec::new(seed, i)).unwrap()
    }

    #[test]
    fn ito_trivial_integrands() {
        let x = unit(&[1.0, 3.0, 2.0, 5.0]);
        let one = Path::constant(*x.grid(), 1.0).unwrap();
        let zero = Path::constant(*x.grid(), 0.0).unwrap();
        assert_eq!(ito_integral(&one, &x).unwrap().values(), &[0.0, 2.0, 1.0, 4.0]);
        assert!(ito_integral(&zero, &x).unwrap().values().iter().all(|&v| v == 0.0));
        let other = Path::constant(TimeGrid::new(0.5, 3).unwrap(), 1.0).unwrap();
        assert!(matches!(ito_integral(&other, &x), Err(LabError::GridMismatch)));
    }

    #[test]
    fn ito_is_left_point() {
        let x = unit(&[0.0, 1.0, 3.0]);
        let h = unit(&[2.0, 5.0, 100.0]);
        assert_eq!(ito_integral(&h, &x).unwrap().values(), &[0.0, 2.0, 12.0]);
    }

    #[test]
    fn ito_formula_for_square_converges_at_sqrt_dt() {
        let median_residual = |dt: f64| {
            let mut r: Vec<f64> = (0..200)
                .map(|i| {
                    let b = bm(dt, 5, i);
                    let i_bdb = ito_integral(&b, &b).unwrap().last();
                    // oracle: ∫B dB = (B² - <B>)/2 with the exact bracket <B>_1 = 1
                    (i_bdb + 0.5 - 0.5 * b.last().powi(2)).abs()
                })
                .collect();
            crate::stats::median(&mut r)
        };
        let coarse = median_residual(1e-2);
        let fine = median_residual(2.5e-3);
        assert!(fine < 0.65 * coarse, "coarse {coarse}, fine {fine}");
    }

    #[test]
    fn quadratic_variation_cases() {
        let g = TimeGrid::new(0.01, 100).unwrap();
        let lin = Path::from_fn(g, |t| 3.0 * t).unwrap();
        assert!((quadratic_variation(&lin).last() - 9.0 / 100.0).abs() < 1e-12);
        let c = Path::constant(g, 2.0).unwrap();
        assert!(quadratic_variation(&c).values().iter().all(|&v| v == 0.0));
        let mean: f64 = (0..200).map(|i| quadratic_variation(&bm(1e-4, 3, i)).last()).sum::<f64>() / 200.0;
        assert!((mean - 1.0).abs() < 0.05);
    }

    #[test]
    fn occupation_examples() {
        let g = TimeGrid::new(0.01, 100).unwrap();
        let zero = Path::constant(g, 0.0).unwrap();
        let lt = local_time_occupation(&zero, 0.1).unwrap();
        for k in 0..=100 {
            assert!((lt.values()[k] - g.time(k) / 0.2).abs() < 1e-12);
        }
        let far = Path::constant(g, 1.0).unwrap();
        assert!(local_time_occupation(&far, 0.1).unwrap().values().iter().all(|&v| v == 0.0));
        assert!(local_time_occupation(&far, 0.0).is_err());
        assert!(local_time_occupation(&far, -1.0).is_err());
    }

    #[test]
    fn downcrossing_examples() {
        let g = TimeGrid::new(0.01, 100).unwrap();
        let zero = Path::constant(g, 0.0).unwrap();
        assert_eq!(local_time_downcrossing(&zero, 0.1).unwrap().last(), 0.0);
        let mono = Path::from_fn(g, |t| 1.0 - 2.0 * t).unwrap();
        let lt = local_time_downcrossing(&mono, 0.1).unwrap();
        let width = 0.1 + 2.0 * CROSSING_OVERSHOOT * 0.1;
        assert!(lt.last() <= width + 1e-15);
        assert!(local_time_downcrossing(&zero, 0.0).is_err());
    }

    #[test]
    fn tanaka_local_time_examples() {
        let g = TimeGrid::new(0.01, 100).unwrap();
        assert_eq!(tanaka_local_time(&Path::constant(g, 0.0).unwrap()).last(), 0.0);
        // no zero after the start: constant afterwards
        let p = Path::from_fn(g, |t| t + 0.5 * (t * 10.0).sin().abs()).unwrap();
        let lt = tanaka_local_time(&p);
        assert!(lt.values()[1..].windows(2).all(|w| w[1] == w[0]));
        let d = gen_reflected(&bm(1e-3, 1, 0)).unwrap();
        let lt = local_time_tanaka(&d).unwrap();
        let direct = tanaka_local_time(&bm(1e-3, 1, 0));
        for (a, b) in lt.values().iter().zip(direct.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn local_time_paths_are_monotone_and_zero_carried() {
        let b = bm(1e-4, 8, 3);
        let eps = 0.02;
        let zeros = zero_set(&b, 0.0).unwrap();
        let occ = local_time_occupation(&b, eps).unwrap();
        for (k, d) in occ.increments().enumerate() {
            assert!(d >= 0.0);
            if d > 0.0 {
                assert!(b.values()[k].abs() <= eps);
            }
        }
        let dc = local_time_downcrossing(&b, eps).unwrap();
        for (k, d) in dc.increments().enumerate() {
            assert!(d >= 0.0);
            if d > 0.0 {
                assert!(zeros.contains(k + 1));
            }
        }
        let tl = tanaka_local_time(&b);
        for (k, d) in tl.increments().enumerate() {
            assert!(d >= 0.0);
            if d > 0.0 {
                assert!(zeros.contains(k) || zeros.contains(k + 1));
            }
        }
    }

    #[test]
    fn tanaka_check_starts_exact_and_refines() {
        let b = bm(1e-4, 12, 0);
        let rep = check_tanaka(&b, 0.01, 0.1).unwrap();
        assert_eq!(rep.component("residual").unwrap().values()[0], 0.0);
        // eps = dt^0.4 along the refinement schedule
        let median_sup = |dt: f64| {
            let mut s: Vec<f64> = (0..200)
                .map(|i| check_tanaka(&bm(dt, 12, i), dt.powf(0.4), 0.1).unwrap().sup_residual)
                .collect();
            crate::stats::median(&mut s)
        };
        let (a, b, c) = (median_sup(1e-3), median_sup(2.5e-4), median_sup(6.25e-5));
        assert!(a > b && b > c, "{a} {b} {c}");
    }

    #[test]
    fn balayage_constant_k() {
        for i in 0..5 {
            let b = bm(1e-3, 30, i);
            let k = Path::constant(*b.grid(), 2.5).unwrap();
            let rep = check_balayage(&k, &b, 1e-10).unwrap();
            assert!(rep.pass, "osc {}", rep.sup_residual);
            assert!(rep.component("r").unwrap().sup_abs() < 1e-10);
        }
    }

    #[test]
    fn balayage_without_zeros() {
        let g = TimeGrid::new(0.01, 100).unwrap();
        let y = Path::from_fn(g, |t| t).unwrap();
        let k = Path::from_fn(g, |t| (3.0 * t).cos()).unwrap();
        let rep = check_balayage(&k, &y, 1e-10).unwrap();
        assert!(rep.component("r").unwrap().values().iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn balayage_with_local_time_functional() {
        // k = f(L̂) is adapted and continuous, so the zero-carried part vanishes
        // in the limit: R stays constant inside excursions and its total
        // variation shrinks under refinement.
        let tv = |dt: f64| {
            (0..50)
                .map(|i| {
                    let b = bm(dt, 40, i);
                    let l = tanaka_local_time(&b);
                    let k = l.map(|x| 1.0 / (1.0 + x)).unwrap();
                    let rep = check_balayage(&k, &b, 1e-10).unwrap();
                    assert!(rep.pass);
                    rep.statistics["total_variation"]
                })
                .sum::<f64>()
                / 50.0
        };
        let coarse = tv(1e-3);
        let fine = tv(6.25e-5);
        assert!(fine < coarse, "{coarse} -> {fine}");
    }
}
