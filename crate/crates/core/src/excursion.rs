//! Zero sets, excursion intervals, last zeros and the sign processes `K`
//! and `Z^α`.
//!
//! A sampled path almost never hits zero exactly, so the operative zero set is
//! the set of exact zeros plus one index per sign change (the endpoint of the
//! crossing step with the smaller magnitude, the earlier one on ties), plus
//! every index within an optional `band` of zero.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::path::{DecomposedPath, Path, TimeGrid};
use crate::seed::SeedSpec;

/// Sorted set of grid indices regarded as zeros of a path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZeroSet {
    mask: Vec<bool>,
}

impl ZeroSet {
    pub fn empty(len: usize) -> Self {
        Self { mask: vec![false; len] }
    }

    pub fn from_indices(len: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut z = Self::empty(len);
        for k in indices {
            z.mask[k] = true;
        }
        z
    }

    #[inline]
    pub fn contains(&self, k: usize) -> bool {
        self.mask[k]
    }

    #[inline]
    pub fn len_domain(&self) -> usize {
        self.mask.len()
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&z| z).count()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.mask.iter().enumerate().filter(|(_, &z)| z).map(|(k, _)| k).collect()
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn insert(&mut self, k: usize) {
        self.mask[k] = true;
    }

    pub fn union(&self, other: &ZeroSet) -> ZeroSet {
        assert_eq!(self.mask.len(), other.mask.len());
        ZeroSet {
            mask: self.mask.iter().zip(&other.mask).map(|(a, b)| *a || *b).collect(),
        }
    }

    /// Fraction of indices in exactly one of the two sets.
    pub fn symmetric_difference_ratio(&self, other: &ZeroSet) -> f64 {
        assert_eq!(self.mask.len(), other.mask.len());
        let diff = self.mask.iter().zip(&other.mask).filter(|(a, b)| a != b).count();
        diff as f64 / self.mask.len() as f64
    }

    /// For every index, the latest zero index at or before it.
    pub fn last_zero_indices(&self) -> Vec<Option<usize>> {
        let mut out = Vec::with_capacity(self.mask.len());
        let mut last = None;
        for (k, &z) in self.mask.iter().enumerate() {
            if z {
                last = Some(k);
            }
            out.push(last);
        }
        out
    }

    /// Latest zero index overall.
    pub fn last(&self) -> Option<usize> {
        self.mask.iter().rposition(|&z| z)
    }
}

/// Endpoint of the step `k -> k+1` closer to zero (earlier on ties).
#[inline]
pub(crate) fn attribute_step(values: &[f64], k: usize) -> usize {
    if values[k].abs() <= values[k + 1].abs() {
        k
    } else {
        k + 1
    }
}

/// Exact zeros, banded near-zeros and one index per sign change.
pub fn zero_set(x: &Path, band: f64) -> Result<ZeroSet> {
    if !(band >= 0.0) {
        return Err(LabError::param("band", format!("must be >= 0, got {band}")));
    }
    let v = x.values();
    let mut z = ZeroSet::empty(v.len());
    for (k, &xk) in v.iter().enumerate() {
        if xk.abs() <= band {
            z.mask[k] = true;
        }
    }
    for k in 0..v.len().saturating_sub(1) {
        if v[k] * v[k + 1] < 0.0 {
            z.mask[attribute_step(v, k)] = true;
        }
    }
    Ok(z)
}

/// Zero set of a decomposed path: the zeros of `x` together with the support
/// of `dV`, each moving step attributed to its endpoint closer to zero.
///
/// For a nonnegative path such as `|B|` the crossings are invisible in `x`
/// itself; the finite-variation part, which only moves on the zero set, is
/// what marks them.
pub fn zero_set_decomposed(d: &DecomposedPath, band: f64) -> Result<ZeroSet> {
    let mut z = zero_set(&d.x, band)?;
    let xv = d.x.values();
    for k in d.dv_support_steps() {
        z.mask[attribute_step(xv, k)] = true;
    }
    Ok(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Excursion {
    /// First index off the zero set.
    pub first: usize,
    /// Last index off the zero set (inclusive).
    pub last: usize,
    pub sign: i8,
    /// Runs to the final grid index without returning to zero.
    pub unfinished: bool,
}

impl Excursion {
    /// Zero index opening the excursion; `None` when the path starts inside it.
    pub fn g_index(&self) -> Option<usize> {
        self.first.checked_sub(1)
    }

    /// Zero index closing the excursion, or the final index when unfinished.
    pub fn d_index(&self) -> usize {
        if self.unfinished {
            self.last
        } else {
            self.last + 1
        }
    }

    pub fn len(&self) -> usize {
        self.last + 1 - self.first
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Duration between the bracketing zeros in units of grid steps.
    pub fn span_steps(&self) -> usize {
        let g = self.g_index().unwrap_or(0);
        self.d_index() - g
    }
}

/// Ordered, disjoint excursion intervals of a path.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcursionSet {
    pub excursions: Vec<Excursion>,
    pub source_grid: TimeGrid,
}

impl ExcursionSet {
    /// Maximal runs of indices outside `zeros`; each run's sign is the sign of
    /// the path at its largest-magnitude sample.
    pub fn from_zero_set(x: &Path, zeros: &ZeroSet) -> ExcursionSet {
        let v = x.values();
        let n = v.len();
        let mut excursions = Vec::new();
        let mut k = 0;
        while k < n {
            if zeros.contains(k) {
                k += 1;
                continue;
            }
            let first = k;
            let mut peak = k;
            while k < n && !zeros.contains(k) {
                if v[k].abs() > v[peak].abs() {
                    peak = k;
                }
                k += 1;
            }
            let last = k - 1;
            excursions.push(Excursion {
                first,
                last,
                sign: if v[peak] < 0.0 { -1 } else { 1 },
                unfinished: last == n - 1,
            });
        }
        ExcursionSet {
            excursions,
            source_grid: *x.grid(),
        }
    }

    pub fn len(&self) -> usize {
        self.excursions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.excursions.is_empty()
    }

    /// Excursion id covering each index (`None` on the zero set).
    pub fn labels(&self) -> Vec<Option<usize>> {
        let mut out = vec![None; self.source_grid.len()];
        for (i, e) in self.excursions.iter().enumerate() {
            for slot in &mut out[e.first..=e.last] {
                *slot = Some(i);
            }
        }
        out
    }

    /// Number of excursions whose span between bracketing zeros is at least `min_duration`.
    pub fn count_longer_than(&self, min_duration: f64) -> usize {
        let dt = self.source_grid.dt();
        self.excursions
            .iter()
            .filter(|e| e.span_steps() as f64 * dt >= min_duration)
            .count()
    }
}

pub fn excursion_decompose(x: &Path, band: f64) -> Result<ExcursionSet> {
    let z = zero_set(x, band)?;
    Ok(ExcursionSet::from_zero_set(x, &z))
}

/// Path of last-zero times `t_k ↦ sup{t_j ≤ t_k : j in zero set}`.
pub fn last_zero(x: &Path, band: f64) -> Result<Path> {
    let z = zero_set(x, band)?;
    last_zero_from(x, &z)
}

pub fn last_zero_from(x: &Path, zeros: &ZeroSet) -> Result<Path> {
    if !zeros.contains(0) {
        return Err(LabError::NoPriorZero(x.values()[0]));
    }
    let g = *x.grid();
    let times = zeros
        .last_zero_indices()
        .into_iter()
        .map(|j| g.time(j.expect("index 0 is a zero")))
        .collect();
    Ok(Path::from_parts(g, times))
}

/// A `{-1, 0, +1}`-valued path, constant on excursions.
#[derive(Debug, Clone, PartialEq)]
pub struct SignProcess(Path);

impl SignProcess {
    pub fn path(&self) -> &Path {
        &self.0
    }

    pub fn values(&self) -> &[f64] {
        self.0.values()
    }

    pub fn into_path(self) -> Path {
        self.0
    }

    /// All `+1` on the given excursions, `0` elsewhere.
    pub fn positive(exc: &ExcursionSet) -> SignProcess {
        let mut v = vec![0.0; exc.source_grid.len()];
        for e in &exc.excursions {
            v[e.first..=e.last].fill(1.0);
        }
        SignProcess(Path::from_parts(exc.source_grid, v))
    }
}

/// `K`: the excursion's sign inside it and, on the zero set, the sign of the
/// next excursion (right limit), or 0 once no excursion follows.
pub fn sign_k(x: &Path, exc: &ExcursionSet) -> Result<SignProcess> {
    if *x.grid() != exc.source_grid {
        return Err(LabError::GridMismatch);
    }
    let n = x.len();
    let ex = &exc.excursions;
    let mut k_vals = vec![0.0; n];
    let mut next_sign = 0.0;
    let mut remaining = ex.len();
    for k in (0..n).rev() {
        while remaining > 0 && ex[remaining - 1].first > k {
            next_sign = ex[remaining - 1].sign as f64;
            remaining -= 1;
        }
        k_vals[k] = next_sign;
    }
    // inside excursions use their own sign
    for e in &exc.excursions {
        k_vals[e.first..=e.last].fill(e.sign as f64);
    }
    Ok(SignProcess(Path::from_parts(exc.source_grid, k_vals)))
}

/// `Z^α`: an independent `±1` draw per excursion (`+1` with probability `α`),
/// `0` on the zero set.
pub fn make_z_alpha(exc: &ExcursionSet, alpha: f64, seed: SeedSpec) -> Result<SignProcess> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(LabError::param("alpha", format!("must lie in [0, 1], got {alpha}")));
    }
    let mut rng = seed.rng();
    let mut v = vec![0.0; exc.source_grid.len()];
    for e in &exc.excursions {
        let u: f64 = rng.random();
        let zeta = if u < alpha { 1.0 } else { -1.0 };
        v[e.first..=e.last].fill(zeta);
    }
    Ok(SignProcess(Path::from_parts(exc.source_grid, v)))
}
