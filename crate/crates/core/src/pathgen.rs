//! Brownian paths and the standard class-(Σ) examples built from them.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::path::{DecomposedPath, Path, TimeGrid};
use crate::seed::{SeedSpec, StreamRng};

#[inline]
pub(crate) fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Unbounded sequence of Brownian samples on a fixed step.
///
/// The first `n` values of a stream are exactly the values of
/// [`gen_brownian`] on an `n`-step grid with the same seed, so a simulation may
/// keep extending its horizon without changing the prefix it already saw.
pub struct BrownianStream {
    rng: StreamRng,
    sd: f64,
    value: f64,
}

impl BrownianStream {
    pub fn new(dt: f64, seed: SeedSpec) -> Result<Self> {
        Self::starting_at(dt, seed, 0.0)
    }

    /// Stream started from `x0` instead of the origin.
    pub fn starting_at(dt: f64, seed: SeedSpec, x0: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(LabError::InvalidGrid(format!("dt must be positive, got {dt}")));
        }
        Ok(Self {
            rng: seed.rng(),
            sd: dt.sqrt(),
            value: x0,
        })
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.value
    }

    /// Advances one step and returns the new value.
    #[inline]
    pub fn step(&mut self) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.rng);
        self.value += self.sd * z;
        self.value
    }
}

pub fn gen_brownian(grid: TimeGrid, seed: SeedSpec) -> Result<Path> {
    let mut stream = BrownianStream::new(grid.dt(), seed)?;
    let mut values = Vec::with_capacity(grid.len());
    values.push(0.0);
    for _ in 0..grid.n_steps() {
        values.push(stream.step());
    }
    Ok(Path::from_parts(grid, values))
}

/// `X = |B|` with `M = |B_0| + ∫ sgn(B) dB` (left point, `sgn(0) = 0`) and `V = X - M`,
/// the discrete Tanaka local time.
pub fn gen_reflected(b: &Path) -> Result<DecomposedPath> {
    let bv = b.values();
    let x: Vec<f64> = bv.iter().map(|v| v.abs()).collect();
    let mut m = Vec::with_capacity(bv.len());
    let mut acc = x[0];
    m.push(acc);
    for w in bv.windows(2) {
        acc += sgn(w[0]) * (w[1] - w[0]);
        m.push(acc);
    }
    let v: Vec<f64> = x.iter().zip(&m).map(|(a, b)| a - b).collect();
    let g = *b.grid();
    DecomposedPath::new(Path::new(g, x)?, Path::new(g, m)?, Path::new(g, v)?)
}

/// Drawdown `X = S - B` with `S` the running maximum: `M = -B`, `V = S`.
pub fn gen_drawdown(b: &Path) -> Result<DecomposedPath> {
    let bv = b.values();
    let b0 = bv[0];
    let mut s = Vec::with_capacity(bv.len());
    let mut run = b0;
    for &v in bv {
        run = run.max(v);
        s.push(run);
    }
    let x: Vec<f64> = s.iter().zip(bv).map(|(s, b)| s - b).collect();
    let v: Vec<f64> = s.iter().map(|s| s - b0).collect();
    let m: Vec<f64> = bv.iter().map(|b| b0 - b).collect();
    let g = *b.grid();
    DecomposedPath::new(Path::new(g, x)?, Path::new(g, m)?, Path::new(g, v)?)
}

/// `X = B + drift * t` with `V = drift * t`; a semimartingale that is not in
/// class (Σ) unless `drift = 0`.
pub fn gen_drifted(b: &Path, drift: f64) -> Result<DecomposedPath> {
    let g = *b.grid();
    let v = Path::from_fn(g, |t| drift * t)?;
    let x = b.zip_with(&v, |a, c| a + c)?;
    DecomposedPath::new(x, b.clone(), v)
}

/// Brownian path viewed as a decomposed path with `V = 0`.
pub fn brownian_decomposed(b: &Path) -> Result<DecomposedPath> {
    DecomposedPath::new(b.clone(), b.clone(), Path::constant(*b.grid(), 0.0)?)
}

/// Which example process an ensemble draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum GeneratorSpec {
    Brownian,
    Reflected,
    Drawdown,
    Drifted { drift: f64 },
}

impl GeneratorSpec {
    pub fn generate(&self, grid: TimeGrid, seed: SeedSpec) -> Result<DecomposedPath> {
        let b = gen_brownian(grid, seed)?;
        match *self {
            GeneratorSpec::Brownian => brownian_decomposed(&b),
            GeneratorSpec::Reflected => gen_reflected(&b),
            GeneratorSpec::Drawdown => gen_drawdown(&b),
            GeneratorSpec::Drifted { drift } => gen_drifted(&b, drift),
        }
    }
}

/// Evaluates `f` on seeds `(master_seed, 0..n_paths)` in parallel. The result
/// is ordered by stream index and independent of the thread count.
pub fn par_ensemble<T, F>(master_seed: u64, n_paths: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(SeedSpec) -> Result<T> + Sync + Send,
{
    if n_paths == 0 {
        return Err(LabError::param("n_paths", "must be at least 1"));
    }
    (0..n_paths as u64)
        .into_par_iter()
        .map(|i| f(SeedSpec::new(master_seed, i)))
        .collect()
}

pub fn gen_ensemble(
    spec: &GeneratorSpec,
    grid: TimeGrid,
    master_seed: u64,
    n_paths: usize,
) -> Result<Vec<DecomposedPath>> {
    par_ensemble(master_seed, n_paths, |seed| spec.generate(grid, seed))
}

pub fn gen_brownian_ensemble(grid: TimeGrid, master_seed: u64, n_paths: usize) -> Result<Vec<Path>> {
    par_ensemble(master_seed, n_paths, |seed| gen_brownian(grid, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(dt: f64, n: usize) -> TimeGrid {
        TimeGrid::new(dt, n).unwrap()
    }

    #[test]
    fn brownian_is_deterministic_and_starts_at_zero() {
        let g = grid(0.01, 100);
        let a = gen_brownian(g, SeedSpec::new(42, 5)).unwrap();
        let b = gen_brownian(g, SeedSpec::new(42, 5)).unwrap();
        assert_eq!(a.values(), b.values());
        assert_eq!(a.values()[0], 0.0);
        let c = gen_brownian(g, SeedSpec::new(42, 6)).unwrap();
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn stream_prefix_matches_path() {
        let g = grid(0.001, 500);
        let p = gen_brownian(g, SeedSpec::new(3, 9)).unwrap();
        let mut s = BrownianStream::new(0.001, SeedSpec::new(3, 9)).unwrap();
        for k in 1..=500 {
            assert_eq!(s.step(), p.values()[k]);
        }
    }

    #[test]
    fn brownian_quadratic_variation_is_time() {
        let g = grid(1e-4, 10_000);
        let b = gen_brownian(g, SeedSpec::new(11, 0)).unwrap();
        let qv: f64 = b.values().windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
        assert!((qv - 1.0).abs() < 0.05, "qv = {qv}");
    }

    #[test]
    fn brownian_endpoint_moments() {
        let g = grid(0.01, 100);
        let ends: Vec<f64> = gen_brownian_ensemble(g, 2024, 10_000)
            .unwrap()
            .iter()
            .map(|p| p.last())
            .collect();
        let n = ends.len() as f64;
        let mean = ends.iter().sum::<f64>() / n;
        let var = ends.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 4.0 / n.sqrt(), "mean = {mean}");
        assert!((var - 1.0).abs() < 0.05, "var = {var}");
    }

    #[test]
    fn reflected_of_zero_path_is_zero() {
        let g = grid(0.1, 10);
        let z = Path::constant(g, 0.0).unwrap();
        let d = gen_reflected(&z).unwrap();
        assert!(d.x.values().iter().chain(d.m.values()).chain(d.v.values()).all(|&v| v == 0.0));
    }

    #[test]
    fn reflected_structure() {
        let g = grid(1e-3, 2000);
        let b = gen_brownian(g, SeedSpec::new(1, 1)).unwrap();
        let d = gen_reflected(&b).unwrap();
        for (x, b) in d.x.values().iter().zip(b.values()) {
            assert_eq!(*x, b.abs());
        }
        for w in d.v.values().windows(2) {
            assert!(w[1] - w[0] >= -1e-12);
        }
        for k in 0..d.x.len() {
            let (x, m, v) = (d.x.values()[k], d.m.values()[k], d.v.values()[k]);
            assert!((x - m - v).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn reflected_local_time_mean() {
        let g = grid(1e-4, 10_000);
        let ends: Vec<f64> = par_ensemble(77, 10_000, |s| {
            let b = gen_brownian(g, s)?;
            Ok(gen_reflected(&b)?.v.last())
        })
        .unwrap();
        let mean = ends.iter().sum::<f64>() / ends.len() as f64;
        let target = (2.0 / std::f64::consts::PI).sqrt();
        assert!((mean - target).abs() < 0.02, "E L = {mean}");
    }

    #[test]
    fn drawdown_monotone_cases() {
        let g = grid(1.0, 4);
        let up = Path::new(g, vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        let d = gen_drawdown(&up).unwrap();
        assert!(d.x.values().iter().all(|&x| x == 0.0));
        assert_eq!(d.v.values(), up.values());

        let down = Path::new(g, vec![0.0, -1.0, -2.0, -3.0, -4.0]).unwrap();
        let d = gen_drawdown(&down).unwrap();
        assert_eq!(d.x.values(), &[0.0, 1.0, 2.0, 3.0, 4.0]);
        assert!(d.v.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn drawdown_v_moves_only_near_zero() {
        let g = grid(1e-4, 10_000);
        let dt = g.dt();
        let mut bad = 0usize;
        let mut steps = 0usize;
        for i in 0..20 {
            let b = gen_brownian(g, SeedSpec::new(5, i)).unwrap();
            let d = gen_drawdown(&b).unwrap();
            for k in 0..g.n_steps() {
                let dv = d.v.values()[k + 1] - d.v.values()[k];
                assert!(dv >= 0.0);
                assert!(d.x.values()[k] >= 0.0);
                if dv > 0.0 && d.x.values()[k + 1] > 2.0 * dt.sqrt() {
                    bad += 1;
                }
                steps += 1;
            }
        }
        assert!((bad as f64) < 1e-3 * steps as f64);
    }

    #[test]
    fn ensemble_single_path_matches_direct_call() {
        let g = grid(0.01, 50);
        let e = gen_ensemble(&GeneratorSpec::Brownian, g, 9, 1).unwrap();
        let direct = gen_brownian(g, SeedSpec::new(9, 0)).unwrap();
        assert_eq!(e[0].x, direct);
    }

    #[test]
    fn ensemble_independent_of_thread_count() {
        let g = grid(0.01, 64);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| gen_ensemble(&GeneratorSpec::Reflected, g, 31, 40).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn zero_paths_rejected() {
        let g = grid(0.01, 10);
        assert!(gen_ensemble(&GeneratorSpec::Brownian, g, 1, 0).is_err());
    }
}
