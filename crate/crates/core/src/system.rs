//! Discrete linear time-varying systems `x_{n+1} = A_n x_n` on a finite
//! horizon, with memoized transition matrices.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;

/// A finite sequence of square coefficient matrices `A_0, ..., A_{N-1}`.
///
/// Transition matrices are defined on the window `0 <= n <= m <= N`.
#[derive(Debug, Clone)]
pub struct LtvSystem {
    dim: usize,
    coeffs: Vec<DMatrix<f64>>,
    cache: TransitionCache,
}

/// Memo table for transition matrices, one slot per admissible pair.
///
/// Each slot is filled at most once; concurrent readers see either an empty
/// slot or the final value.
#[derive(Debug, Clone)]
struct TransitionCache {
    horizon: usize,
    slots: Vec<OnceLock<DMatrix<f64>>>,
}

impl TransitionCache {
    fn new(horizon: usize) -> Self {
        let len = (horizon + 1) * (horizon + 2) / 2;
        Self {
            horizon,
            slots: (0..len).map(|_| OnceLock::new()).collect(),
        }
    }

    /// Slot of `(m, n)`; rows are grouped by the start step `n`.
    fn index(&self, m: usize, n: usize) -> usize {
        let big_n = self.horizon;
        // sum_{j < n} (N - j + 1)
        n * (big_n + 1) - n * (n.saturating_sub(1)) / 2 + (m - n)
    }
}

/// Build and validate a system.
pub fn make_system(dim: usize, coeffs: Vec<DMatrix<f64>>) -> Result<LtvSystem> {
    LtvSystem::new(dim, coeffs)
}

impl LtvSystem {
    pub fn new(dim: usize, coeffs: Vec<DMatrix<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter {
                name: "dim",
                reason: "state dimension must be positive".into(),
            });
        }
        if coeffs.is_empty() {
            return Err(Error::EmptySystem);
        }
        for (step, a) in coeffs.iter().enumerate() {
            if a.nrows() != dim || a.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    step,
                    expected: dim,
                    rows: a.nrows(),
                    cols: a.ncols(),
                });
            }
            if let Some(pos) = a.iter().position(|v| !v.is_finite()) {
                // nalgebra storage is column-major
                return Err(Error::NonFinite {
                    step,
                    row: pos % dim,
                    col: pos / dim,
                });
            }
        }
        let horizon = coeffs.len();
        Ok(Self {
            dim,
            coeffs,
            cache: TransitionCache::new(horizon),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of defined steps `N`; transitions exist up to `m = N`.
    pub fn horizon(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeff(&self, n: usize) -> &DMatrix<f64> {
        &self.coeffs[n]
    }

    pub fn coeffs(&self) -> &[DMatrix<f64>] {
        &self.coeffs
    }

    fn check_pair(&self, m: usize, n: usize) -> Result<()> {
        if m < n {
            return Err(Error::NotAdmissible { m, n });
        }
        if m > self.horizon() {
            return Err(Error::BeyondHorizon {
                step: m,
                horizon: self.horizon(),
            });
        }
        Ok(())
    }

    /// The transition matrix `A_{m-1} ... A_n` (identity when `m == n`).
    ///
    /// Built by the recurrence `T(j+1, n) = A_j T(j, n)` and memoized.
    pub fn transition(&self, m: usize, n: usize) -> Result<&DMatrix<f64>> {
        self.check_pair(m, n)?;
        let cache = &self.cache;
        let mut current = cache.slots[cache.index(n, n)]
            .get_or_init(|| DMatrix::identity(self.dim, self.dim));
        for j in n..m {
            let next = &cache.slots[cache.index(j + 1, n)];
            current = next.get_or_init(|| &self.coeffs[j] * current);
        }
        Ok(current)
    }

    /// Same recurrence as [`transition`](Self::transition), bypassing the memo.
    pub fn transition_uncached(&self, m: usize, n: usize) -> Result<DMatrix<f64>> {
        self.check_pair(m, n)?;
        let mut t = DMatrix::identity(self.dim, self.dim);
        for j in n..m {
            t = &self.coeffs[j] * t;
        }
        Ok(t)
    }

    /// Propagate a state from step `n` to step `m` by successive
    /// matrix-vector products.
    pub fn apply(&self, m: usize, n: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_pair(m, n)?;
        if x.len() != self.dim {
            return Err(Error::VectorLength {
                expected: self.dim,
                got: x.len(),
            });
        }
        let mut y = x.clone();
        for j in n..m {
            y = &self.coeffs[j] * y;
        }
        Ok(y)
    }

    /// Check `T(m,n) T(n,p) = T(m,p)` for all `0 <= p <= n <= m <= window`.
    pub fn check_propagator(&self, window: usize, tol: f64) -> Result<PropagatorReport> {
        if window > self.horizon() {
            return Err(Error::BeyondHorizon {
                step: window,
                horizon: self.horizon(),
            });
        }
        let mut worst = 0.0f64;
        let mut witness = (0, 0, 0);
        for m in 0..=window {
            for n in 0..=m {
                let t_mn = self.transition(m, n)?;
                for p in 0..=n {
                    let composed = t_mn * self.transition(n, p)?;
                    let direct = self.transition(m, p)?;
                    let dev = linalg::relative_frobenius(&composed, direct, f64::MIN_POSITIVE);
                    if dev > worst {
                        worst = dev;
                        witness = (m, n, p);
                    }
                }
            }
        }
        Ok(PropagatorReport {
            window,
            tol,
            worst_relative_deviation: worst,
            witness,
            pass: worst <= tol,
        })
    }

    /// Reversible iff every coefficient has smallest singular value above `tol`.
    pub fn is_reversible(&self, tol: f64) -> ReversibilityReport {
        let steps: Vec<StepSingularity> = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(step, a)| {
                let s = linalg::sigma_min(a);
                StepSingularity {
                    step,
                    sigma_min: s,
                    singular: s <= tol,
                }
            })
            .collect();
        ReversibilityReport {
            tol,
            reversible: steps.iter().all(|s| !s.singular),
            steps,
        }
    }

    /// New system with `A_n` replaced by `scale[n] * A_n`.
    pub fn scaled(&self, scale: &[f64]) -> Result<LtvSystem> {
        if scale.len() != self.horizon() {
            return Err(Error::InvalidParameter {
                name: "scale",
                reason: format!("expected {} factors, got {}", self.horizon(), scale.len()),
            });
        }
        let coeffs = self
            .coeffs
            .iter()
            .zip(scale)
            .map(|(a, &s)| a * s)
            .collect();
        LtvSystem::new(self.dim, coeffs)
    }

    /// Largest per-step relative Frobenius deviation from `other`.
    pub fn max_relative_deviation(&self, other: &LtvSystem) -> f64 {
        if self.dim != other.dim || self.horizon() != other.horizon() {
            return f64::INFINITY;
        }
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| linalg::relative_frobenius(a, b, f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropagatorReport {
    pub window: usize,
    pub tol: f64,
    pub worst_relative_deviation: f64,
    /// `(m, n, p)` of the worst deviation.
    pub witness: (usize, usize, usize),
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepSingularity {
    pub step: usize,
    pub sigma_min: f64,
    pub singular: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReversibilityReport {
    pub tol: f64,
    pub reversible: bool,
    pub steps: Vec<StepSingularity>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_row_slice(v))
    }

    fn e1() -> LtvSystem {
        make_system(3, vec![diag(&[0.5, 2.0, 1.0]); 10]).unwrap()
    }

    #[test]
    fn e1_has_horizon_ten() {
        assert_eq!(e1().horizon(), 10);
        assert_eq!(e1().dim(), 3);
    }

    #[test]
    fn scalar_identity_system() {
        let sys = make_system(1, vec![DMatrix::identity(1, 1)]).unwrap();
        assert_eq!(sys.transition(1, 0).unwrap()[(0, 0)], 1.0);
    }

    #[test]
    fn rejects_non_square_coefficient() {
        let err = make_system(2, vec![DMatrix::zeros(2, 3)]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { step: 0, .. }));
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        let mut a = DMatrix::identity(2, 2);
        a[(1, 0)] = f64::NAN;
        let err = make_system(2, vec![a]).unwrap_err();
        assert_eq!(err, Error::NonFinite { step: 0, row: 1, col: 0 });
        assert_eq!(make_system(2, vec![]).unwrap_err(), Error::EmptySystem);
    }

    #[test]
    fn e1_transition_two_steps() {
        let t = e1().transition(3, 1).unwrap().clone();
        assert_eq!(t, diag(&[0.25, 4.0, 1.0]));
    }

    #[test]
    fn diagonal_transition_is_identity() {
        let sys = e1();
        assert_eq!(*sys.transition(5, 5).unwrap(), DMatrix::identity(3, 3));
    }

    #[test]
    fn transition_index_errors() {
        let sys = e1();
        assert_eq!(sys.transition(2, 3).unwrap_err(), Error::NotAdmissible { m: 2, n: 3 });
        assert!(matches!(sys.transition(11, 0), Err(Error::BeyondHorizon { .. })));
    }

    #[test]
    fn cache_slots_are_distinct() {
        let cache = TransitionCache::new(7);
        let mut seen = std::collections::HashSet::new();
        for n in 0..=7 {
            for m in n..=7 {
                assert!(seen.insert(cache.index(m, n)));
            }
        }
        assert_eq!(seen.len(), cache.slots.len());
        assert_eq!(*seen.iter().max().unwrap(), cache.slots.len() - 1);
    }

    #[test]
    fn e1_propagator_exact() {
        let report = e1().check_propagator(10, 1e-10).unwrap();
        assert!(report.pass);
        assert_eq!(report.worst_relative_deviation, 0.0);
        assert!(e1().check_propagator(11, 1e-10).is_err());
    }

    #[test]
    fn reversibility() {
        assert!(e1().is_reversible(1e-12).reversible);
        let mut coeffs = vec![diag(&[0.5, 2.0, 1.0]); 5];
        coeffs[3] = diag(&[0.5, 2.0, 0.0]);
        let report = make_system(3, coeffs).unwrap().is_reversible(1e-12);
        assert!(!report.reversible);
        let flagged: Vec<usize> = report.steps.iter().filter(|s| s.singular).map(|s| s.step).collect();
        assert_eq!(flagged, vec![3]);
        let tiny = make_system(1, vec![DMatrix::from_element(1, 1, 1e-20)]).unwrap();
        assert!(!tiny.is_reversible(1e-12).reversible);
    }

    #[test]
    fn apply_examples() {
        let sys = e1();
        let x = DVector::from_row_slice(&[1.0, 1.0, 1.0]);
        assert_eq!(sys.apply(2, 0, &x).unwrap(), DVector::from_row_slice(&[0.25, 4.0, 1.0]));
        assert_eq!(sys.apply(4, 4, &x).unwrap(), x);
        let zero = DVector::zeros(3);
        assert_eq!(sys.apply(1, 0, &zero).unwrap(), zero);
        assert!(matches!(
            sys.apply(1, 0, &DVector::zeros(2)),
            Err(Error::VectorLength { .. })
        ));
    }

    #[test]
    fn concurrent_readers_agree() {
        use rayon::prelude::*;
        let coeffs: Vec<DMatrix<f64>> = (0..30)
            .map(|n| DMatrix::from_fn(4, 4, |i, j| ((i * 7 + j * 3 + n) % 5) as f64 * 0.3 - 0.6))
            .collect();
        let sys = make_system(4, coeffs).unwrap();
        let pairs: Vec<(usize, usize)> = (0..=30).flat_map(|m| (0..=m).map(move |n| (m, n))).collect();
        let par: Vec<DMatrix<f64>> = pairs.par_iter().map(|&(m, n)| sys.transition(m, n).unwrap().clone()).collect();
        for (&(m, n), t) in pairs.iter().zip(&par) {
            assert_eq!(*t, sys.transition_uncached(m, n).unwrap());
        }
    }
}
