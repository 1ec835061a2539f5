//! Small statistical helpers: summaries, Kolmogorov–Smirnov distances,
//! robust least squares and quadrature.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{LabError, Result};

pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Standard error of the sample mean.
pub fn stderr(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Median; sorts `xs` in place.
pub fn median(xs: &mut [f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Binomial standard error of a proportion.
pub fn binomial_stderr(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// `sup |F_n - F|` for the empirical CDF of `samples`.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < s.len() {
        // step over ties so the jump is taken once
        let mut j = i;
        while j + 1 < s.len() && s[j + 1] == s[i] {
            j += 1;
        }
        let f = cdf(s[i]);
        d = d.max((f - i as f64 / n).abs()).max(((j + 1) as f64 / n - f).abs());
        i = j + 1;
    }
    d
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Least-squares fit with heteroskedasticity-robust (HC1) standard errors.
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coef: Vec<f64>,
    pub se: Vec<f64>,
    pub t: Vec<f64>,
}

/// Regress `y` on the given regressor columns (no implicit intercept).
pub fn ols_hc1(y: &[f64], columns: &[Vec<f64>]) -> Result<OlsFit> {
    let n = y.len();
    let p = columns.len();
    if p == 0 || n <= p {
        return Err(LabError::DegenerateEnsemble(format!(
            "{n} observations for {p} regressors"
        )));
    }
    let x = DMatrix::from_fn(n, p, |i, j| columns[j][i]);
    let yv = DVector::from_column_slice(y);
    let xtx = x.transpose() * &x;
    let inv = xtx
        .try_inverse()
        .ok_or_else(|| LabError::DegenerateEnsemble("singular design matrix".into()))?;
    let beta = &inv * x.transpose() * &yv;
    let resid = &yv - &x * &beta;
    let mut meat = DMatrix::<f64>::zeros(p, p);
    for i in 0..n {
        let row = x.row(i);
        meat += row.transpose() * row * resid[i].powi(2);
    }
    let cov = &inv * meat * &inv * (n as f64 / (n - p) as f64);
    let se: Vec<f64> = (0..p).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
    let coef: Vec<f64> = beta.iter().copied().collect();
    let t = coef
        .iter()
        .zip(&se)
        .map(|(b, s)| if *s > 0.0 { b / s } else if *b == 0.0 { 0.0 } else { f64::INFINITY })
        .collect();
    Ok(OlsFit { coef, se, t })
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 48)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summaries() {
        assert_eq!(mean(&[1.0, 2.0, 3.0]), 2.0);
        assert_eq!(variance(&[1.0, 2.0, 3.0]), 1.0);
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-11);
    }

    #[test]
    fn ks_distances() {
        // uniform grid midpoints against the uniform CDF: distance 1/(2n)
        let n = 100;
        let s: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_one_sample(&s, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.005).abs() < 1e-12);
        assert_eq!(ks_two_sample(&s, &s), 0.0);
        assert_eq!(ks_two_sample(&[0.0, 1.0], &[2.0, 3.0]), 1.0);
    }

    #[test]
    fn ols_recovers_coefficients() {
        let x: Vec<f64> = (0..50).map(|i| i as f64 / 10.0).collect();
        let noise: Vec<f64> = (0..50).map(|i| if i % 2 == 0 { 0.01 } else { -0.01 }).collect();
        let y: Vec<f64> = x.iter().zip(&noise).map(|(x, e)| 1.0 + 2.0 * x + e).collect();
        let fit = ols_hc1(&y, &[vec![1.0; 50], x]).unwrap();
        assert!((fit.coef[0] - 1.0).abs() < 0.01);
        assert!((fit.coef[1] - 2.0).abs() < 0.01);
        assert!(fit.t[1] > 100.0);
        assert!(ols_hc1(&y, &[vec![1.0; 50], vec![2.0; 50]]).is_err());
    }

    #[test]
    fn simpson_matches_closed_forms() {
        let v = adaptive_simpson(&|x: f64| (-x).exp(), 0.0, 50.0, 1e-12);
        assert!((v - (1.0 - (-50.0f64).exp())).abs() < 1e-10);
        let v = adaptive_simpson(&|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-12);
        assert!((v - 2.0).abs() < 1e-10);
    }
}
