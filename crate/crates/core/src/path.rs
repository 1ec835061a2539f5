//! Grids and sampled paths.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Uniform grid `t_k = k * dt`, `k = 0..=n_steps`, starting at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    dt: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(LabError::InvalidGrid(format!("dt must be positive, got {dt}")));
        }
        if n_steps == 0 {
            return Err(LabError::InvalidGrid("n_steps must be at least 1".into()));
        }
        Ok(Self { dt, n_steps })
    }

    /// Grid covering `[0, horizon]` with the step closest to `dt` that divides it.
    pub fn with_horizon(dt: f64, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(LabError::InvalidGrid(format!("horizon must be positive, got {horizon}")));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(LabError::InvalidGrid(format!("dt must be positive, got {dt}")));
        }
        let n = (horizon / dt).round().max(1.0) as usize;
        Self::new(horizon / n as f64, n)
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.dt
    }

    #[inline]
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of samples, `n_steps + 1`.
    #[inline]
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid time of index `k`, computed as `k * dt` (never by accumulation).
    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    #[inline]
    pub fn horizon(&self) -> f64 {
        self.time(self.n_steps)
    }

    /// Index of the grid point closest to `t`, clamped to the grid.
    pub fn index_of(&self, t: f64) -> usize {
        let k = (t / self.dt).round();
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(self.n_steps)
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |k| self.time(k))
    }
}

/// A real process sampled on a [`TimeGrid`]. Values are always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl Path {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(LabError::LengthMismatch {
                expected: grid.len(),
                actual: values.len(),
            });
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(LabError::NonFinite { index, value });
        }
        Ok(Self { grid, values })
    }

    /// Builds a path from values whose finiteness is guaranteed by construction.
    pub(crate) fn from_parts(grid: TimeGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self { grid, values }
    }

    pub fn constant(grid: TimeGrid, c: f64) -> Result<Self> {
        Self::new(grid, vec![c; grid.len()])
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.times().map(f).collect())
    }

    #[inline]
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.grid.dt()
    }

    #[inline]
    pub fn last(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn at_time(&self, t: f64) -> f64 {
        self.values[self.grid.index_of(t)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Path> {
        Path::new(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn abs(&self) -> Path {
        Path::from_parts(self.grid, self.values.iter().map(|v| v.abs()).collect())
    }

    pub fn zip_with(&self, other: &Path, f: impl Fn(f64, f64) -> f64) -> Result<Path> {
        self.ensure_same_grid(other)?;
        Path::new(
            self.grid,
            self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    pub fn ensure_same_grid(&self, other: &Path) -> Result<()> {
        if self.grid != other.grid {
            return Err(LabError::GridMismatch);
        }
        Ok(())
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Every `stride`-th sample, on the grid with step `stride * dt`.
    pub fn coarsen(&self, stride: usize) -> Result<Path> {
        let n = self.grid.n_steps();
        if stride == 0 || n % stride != 0 {
            return Err(LabError::param(
                "stride",
                format!("{stride} does not divide {n} steps"),
            ));
        }
        let grid = TimeGrid::new(self.grid.dt() * stride as f64, n / stride)?;
        Ok(Path::from_parts(grid, self.values.iter().step_by(stride).copied().collect()))
    }
}

/// `x = m + v`: a path with its declared martingale part `m` and continuous
/// finite-variation part `v` (`v_0 = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct DecomposedPath {
    pub x: Path,
    pub m: Path,
    pub v: Path,
}

/// Relative size below which a finite-variation increment counts as rounding.
pub(crate) const DV_SUPPORT_TOL: f64 = 1e-12;

impl DecomposedPath {
    pub fn new(x: Path, m: Path, v: Path) -> Result<Self> {
        x.ensure_same_grid(&m)?;
        x.ensure_same_grid(&v)?;
        if v.values()[0] != 0.0 {
            return Err(LabError::param("v", format!("must start at 0, got {}", v.values()[0])));
        }
        for (k, ((&xk, &mk), &vk)) in x.values().iter().zip(m.values()).zip(v.values()).enumerate() {
            let scale = 1.0 + xk.abs().max(mk.abs()).max(vk.abs());
            if (xk - mk - vk).abs() > 1e-12 * scale {
                return Err(LabError::param(
                    "x",
                    format!("x != m + v at index {k}: {xk} vs {mk} + {vk}"),
                ));
            }
        }
        Ok(Self { x, m, v })
    }

    /// Builds `m = x - v`, which satisfies the decomposition by construction.
    pub fn from_x_and_v(x: Path, v: Path) -> Result<Self> {
        let m = x.zip_with(&v, |a, b| a - b)?;
        Self::new(x, m, v)
    }

    pub fn grid(&self) -> &TimeGrid {
        self.x.grid()
    }

    /// Indices `k` where the step `k -> k+1` moves `v` by more than rounding.
    pub fn dv_support_steps(&self) -> Vec<usize> {
        let v = self.v.values();
        v.windows(2)
            .enumerate()
            .filter(|(_, w)| (w[1] - w[0]).abs() > DV_SUPPORT_TOL * (1.0 + w[0].abs().max(w[1].abs())))
            .map(|(k, _)| k)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_bad_input() {
        assert!(TimeGrid::new(0.0, 10).is_err());
        assert!(TimeGrid::new(-1.0, 10).is_err());
        assert!(TimeGrid::new(f64::NAN, 10).is_err());
        assert!(TimeGrid::new(0.1, 0).is_err());
    }

    #[test]
    fn grid_times_are_exact_multiples() {
        let g = TimeGrid::new(0.1, 1000).unwrap();
        let mut acc = 0.0;
        for k in 0..1000 {
            assert_eq!(g.time(k), k as f64 * 0.1);
            acc += 0.1;
        }
        // repeated addition drifts, the grid does not
        assert_ne!(acc, 100.0);
        assert_eq!(g.horizon(), 100.0);
    }

    #[test]
    fn path_rejects_nonfinite_and_bad_length() {
        let g = TimeGrid::new(1.0, 2).unwrap();
        assert!(matches!(
            Path::new(g, vec![0.0, f64::INFINITY, 1.0]),
            Err(LabError::NonFinite { index: 1, .. })
        ));
        assert!(matches!(
            Path::new(g, vec![0.0, 1.0]),
            Err(LabError::LengthMismatch { expected: 3, actual: 2 })
        ));
    }

    #[test]
    fn decomposition_must_add_up() {
        let g = TimeGrid::new(1.0, 2).unwrap();
        let x = Path::new(g, vec![0.0, 1.0, 2.0]).unwrap();
        let m = Path::new(g, vec![0.0, 1.0, 1.0]).unwrap();
        let v = Path::new(g, vec![0.0, 0.0, 1.0]).unwrap();
        assert!(DecomposedPath::new(x.clone(), m, v.clone()).is_ok());
        let bad = Path::new(g, vec![0.0, 0.5, 1.0]).unwrap();
        assert!(DecomposedPath::new(x, bad, v).is_err());
    }
}
