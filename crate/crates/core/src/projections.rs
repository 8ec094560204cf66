//! Per-step projection families and the algebra relating three-way, two-way
//! and four-way splittings of the state space.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::report::{CheckOutcome, Verdict};
use crate::system::LtvSystem;

/// Default tolerance for products and sums of projections.
pub const PROJECTION_TOL: f64 = 1e-9;

/// Seed of the random test vectors used by the Pythagoras check.
const PYTHAGORAS_SEED: u64 = 0x005e_ed0f_0a7a;
const PYTHAGORAS_SAMPLES: usize = 100;

/// Common read access to a per-step family of `C` projections.
pub trait ProjectionFamily {
    fn dim(&self) -> usize;
    /// Number of stored steps (`0..len`).
    fn len(&self) -> usize;
    fn components(&self, n: usize) -> &[DMatrix<f64>];

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn component_count(&self) -> usize {
        if self.is_empty() {
            0
        } else {
            self.components(0).len()
        }
    }

    /// Component `i` (zero-based) at every step.
    fn component_sequence(&self, i: usize) -> Vec<DMatrix<f64>> {
        (0..self.len()).map(|n| self.components(n)[i].clone()).collect()
    }
}

fn check_shapes<const C: usize>(dim: usize, steps: &[[DMatrix<f64>; C]]) -> Result<()> {
    if steps.is_empty() {
        return Err(Error::InvalidFamily("family has no steps".into()));
    }
    for (n, comps) in steps.iter().enumerate() {
        for (i, p) in comps.iter().enumerate() {
            if p.nrows() != dim || p.ncols() != dim {
                return Err(Error::InvalidFamily(format!(
                    "component {} at step {n} is {}x{}, expected {dim}x{dim}",
                    i + 1,
                    p.nrows(),
                    p.ncols()
                )));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidFamily(format!(
                    "component {} at step {n} has a non-finite entry",
                    i + 1
                )));
            }
        }
    }
    Ok(())
}

macro_rules! family_type {
    ($(#[$meta:meta])* $name:ident, $count:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            dim: usize,
            steps: Vec<[DMatrix<f64>; $count]>,
        }

        impl $name {
            /// Shape- and finiteness-checked construction; algebraic
            /// properties are left to the validators.
            pub fn new(dim: usize, steps: Vec<[DMatrix<f64>; $count]>) -> Result<Self> {
                check_shapes(dim, &steps)?;
                Ok(Self { dim, steps })
            }

            /// The same components repeated at `len` steps.
            pub fn constant(components: [DMatrix<f64>; $count], len: usize) -> Result<Self> {
                let dim = components[0].nrows();
                Self::new(dim, vec![components; len])
            }

            pub fn step(&self, n: usize) -> &[DMatrix<f64>; $count] {
                &self.steps[n]
            }

            pub fn steps(&self) -> &[[DMatrix<f64>; $count]] {
                &self.steps
            }

            /// Replace component `i` (zero-based) at step `n`.
            pub fn set(&mut self, n: usize, i: usize, p: DMatrix<f64>) -> Result<()> {
                if p.nrows() != self.dim || p.ncols() != self.dim {
                    return Err(Error::InvalidFamily(format!(
                        "replacement is {}x{}, expected {}x{}",
                        p.nrows(), p.ncols(), self.dim, self.dim
                    )));
                }
                self.steps[n][i] = p;
                Ok(())
            }

            /// First `len` steps.
            pub fn truncated(&self, len: usize) -> Self {
                Self { dim: self.dim, steps: self.steps[..len.min(self.steps.len())].to_vec() }
            }

            /// Largest Frobenius deviation between corresponding components.
            pub fn max_deviation(&self, other: &Self) -> f64 {
                if self.dim != other.dim || self.steps.len() != other.steps.len() {
                    return f64::INFINITY;
                }
                self.steps
                    .iter()
                    .zip(&other.steps)
                    .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()))
                    .fold(0.0, f64::max)
            }
        }

        impl ProjectionFamily for $name {
            fn dim(&self) -> usize {
                self.dim
            }
            fn len(&self) -> usize {
                self.steps.len()
            }
            fn components(&self, n: usize) -> &[DMatrix<f64>] {
                &self.steps[n]
            }
        }
    };
}

family_type!(
    /// Three projections per step: stable, unstable and central parts.
    TriProjectionFamily,
    3
);
family_type!(
    /// Two projections per step.
    DiProjectionFamily,
    2
);
family_type!(
    /// Four projections per step, `R1 + R4 = R2 + R3 = I`.
    QuadProjectionFamily,
    4
);

fn idempotence<F: ProjectionFamily + ?Sized>(fam: &F, tol: f64) -> CheckOutcome {
    let mut t = CheckOutcome::tracker("idempotence", tol);
    for n in 0..fam.len() {
        for (i, p) in fam.components(n).iter().enumerate() {
            t.observe((p * p - p).norm(), n, || format!("component {}", i + 1));
        }
    }
    t.finish()
}

fn sum_to_identity<F: ProjectionFamily + ?Sized>(
    fam: &F,
    groups: &[&[usize]],
    tol: f64,
) -> CheckOutcome {
    let d = fam.dim();
    let eye = DMatrix::<f64>::identity(d, d);
    let mut t = CheckOutcome::tracker("resolution", tol);
    for n in 0..fam.len() {
        let comps = fam.components(n);
        for group in groups {
            let mut sum = DMatrix::zeros(d, d);
            for &i in group.iter() {
                sum += &comps[i];
            }
            t.observe((sum - &eye).norm(), n, || {
                let names: Vec<String> = group.iter().map(|i| format!("{}", i + 1)).collect();
                format!("sum of components {}", names.join("+"))
            });
        }
    }
    t.finish()
}

fn products_vanish<F: ProjectionFamily + ?Sized>(
    fam: &F,
    pairs: &[(usize, usize)],
    clause: &str,
    tol: f64,
) -> CheckOutcome {
    let mut t = CheckOutcome::tracker(clause, tol);
    for n in 0..fam.len() {
        let comps = fam.components(n);
        for &(i, j) in pairs {
            t.observe((&comps[i] * &comps[j]).norm(), n, || {
                format!("product of components {} and {}", i + 1, j + 1)
            });
        }
    }
    t.finish()
}

fn all_ordered_pairs(count: usize) -> Vec<(usize, usize)> {
    (0..count)
        .flat_map(|i| (0..count).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect()
}

/// Idempotence, `P1 + P2 + P3 = I` and `Pi Pj = 0` for `i != j`.
pub fn validate_tri(fam: &TriProjectionFamily, tol: f64) -> Verdict {
    Verdict::from_checks(vec![
        idempotence(fam, tol),
        sum_to_identity(fam, &[&[0, 1, 2]], tol),
        products_vanish(fam, &all_ordered_pairs(3), "annihilation", tol),
    ])
}

/// Complementary pair: idempotence, `Q1 + Q2 = I`, `Q1 Q2 = Q2 Q1 = 0`.
pub fn validate_di(fam: &DiProjectionFamily, tol: f64) -> Verdict {
    Verdict::from_checks(vec![
        idempotence(fam, tol),
        sum_to_identity(fam, &[&[0, 1]], tol),
        products_vanish(fam, &all_ordered_pairs(2), "annihilation", tol),
    ])
}

/// Orthogonal pair in the algebraic sense: both components idempotent and
/// `Q1 Q2 = Q2 Q1 = 0`. The pair need not sum to the identity.
pub fn validate_orthogonal_pair(fam: &DiProjectionFamily, tol: f64) -> Verdict {
    Verdict::from_checks(vec![
        idempotence(fam, tol),
        products_vanish(fam, &all_ordered_pairs(2), "annihilation", tol),
    ])
}

/// `R1 + R4 = R2 + R3 = I`, `R1 R2 = R2 R1 = 0`, `R3 R4 = R4 R3`, all idempotent.
pub fn validate_quad(fam: &QuadProjectionFamily, tol: f64) -> Verdict {
    let mut commute = CheckOutcome::tracker("commutation", tol);
    for n in 0..fam.len() {
        let r = fam.step(n);
        commute.observe((&r[2] * &r[3] - &r[3] * &r[2]).norm(), n, || {
            "components 3 and 4".into()
        });
    }
    Verdict::from_checks(vec![
        idempotence(fam, tol),
        sum_to_identity(fam, &[&[0, 3], &[1, 2]], tol),
        products_vanish(fam, &[(0, 1), (1, 0)], "annihilation", tol),
        commute.finish(),
    ])
}

fn relative_residual(residual: f64, scale: f64) -> f64 {
    if residual == 0.0 {
        0.0
    } else {
        residual / scale.max(f64::MIN_POSITIVE)
    }
}

/// Pairs spot-checked for the multi-step invariance identity.
fn sampled_pairs(horizon: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for n in 0..=horizon {
        for span in [2usize, 3, 5, 8] {
            if n + span <= horizon {
                pairs.push((n + span, n));
            }
        }
    }
    pairs.push((horizon, 0));
    pairs
}

/// Invariance `A_n P_n = P_{n+1} A_n` for every step and component, plus a
/// spot check of `T(m,n) P_n = P_m T(m,n)` on sampled pairs.
pub fn check_invariance<F: ProjectionFamily + ?Sized>(
    sys: &LtvSystem,
    fam: &F,
    tol: f64,
) -> Result<Verdict> {
    let horizon = sys.horizon();
    if fam.len() < horizon + 1 {
        return Err(Error::Precondition(format!(
            "family covers {} steps, system needs {}",
            fam.len(),
            horizon + 1
        )));
    }
    if fam.dim() != sys.dim() {
        return Err(Error::InvalidFamily(format!(
            "family dimension {} differs from system dimension {}",
            fam.dim(),
            sys.dim()
        )));
    }
    let count = fam.component_count();
    let mut one_step = CheckOutcome::tracker("invariance", tol);
    for n in 0..horizon {
        let a = sys.coeff(n);
        for i in 0..count {
            let p = &fam.components(n)[i];
            let q = &fam.components(n + 1)[i];
            let res = (a * p - q * a).norm();
            let scale = a.norm() * p.norm().max(q.norm());
            one_step.observe(relative_residual(res, scale), n, || format!("component {}", i + 1));
        }
    }
    let mut multi = CheckOutcome::tracker("transition invariance", tol);
    for (m, n) in sampled_pairs(horizon) {
        let t = sys.transition(m, n)?;
        for i in 0..count {
            let p = &fam.components(n)[i];
            let q = &fam.components(m)[i];
            let res = (t * p - q * t).norm();
            let scale = t.norm() * p.norm().max(q.norm());
            multi.observe(relative_residual(res, scale), n, || {
                format!("component {} on pair ({m}, {n})", i + 1)
            });
        }
    }
    Ok(Verdict::from_checks(vec![one_step.finish(), multi.finish()]))
}

fn require_valid_tri(fam: &TriProjectionFamily) -> Result<()> {
    let v = validate_tri(fam, PROJECTION_TOL);
    if v.pass {
        Ok(())
    } else {
        Err(Error::InvalidFamily(format!(
            "three-way family fails: {}",
            v.failing().join(", ")
        )))
    }
}

/// `(Q1, Q2) = (P1, P2 + P3)`.
pub fn tri_to_two(fam: &TriProjectionFamily) -> Result<DiProjectionFamily> {
    require_valid_tri(fam)?;
    DiProjectionFamily::new(
        fam.dim(),
        fam.steps().iter().map(|[p1, p2, p3]| [p1.clone(), p2 + p3]).collect(),
    )
}

/// `(P1, P2, P3) = (Q1, Q2, I - Q1 - Q2)`, without validation.
pub fn two_to_tri(pair: &DiProjectionFamily) -> Result<TriProjectionFamily> {
    let d = pair.dim();
    let eye = DMatrix::<f64>::identity(d, d);
    TriProjectionFamily::new(
        d,
        pair.steps()
            .iter()
            .map(|[q1, q2]| [q1.clone(), q2.clone(), &eye - q1 - q2])
            .collect(),
    )
}

/// `(R1, R2, R3, R4) = (P1, P2, P1 + P3, P2 + P3)`.
pub fn tri_to_four(fam: &TriProjectionFamily) -> Result<QuadProjectionFamily> {
    require_valid_tri(fam)?;
    QuadProjectionFamily::new(
        fam.dim(),
        fam.steps()
            .iter()
            .map(|[p1, p2, p3]| [p1.clone(), p2.clone(), p1 + p3, p2 + p3])
            .collect(),
    )
}

/// `(P1, P2, P3) = (R1, R2, R3 R4)`.
pub fn four_to_tri(quad: &QuadProjectionFamily) -> Result<TriProjectionFamily> {
    let v = validate_quad(quad, PROJECTION_TOL);
    if !v.pass {
        return Err(Error::InvalidFamily(format!(
            "four-way family fails: {}",
            v.failing().join(", ")
        )));
    }
    TriProjectionFamily::new(
        quad.dim(),
        quad.steps()
            .iter()
            .map(|[r1, r2, r3, r4]| [r1.clone(), r2.clone(), r3 * r4])
            .collect(),
    )
}

/// Stable part against the rest: `(P1, P2 + P3)`.
pub fn make_s(fam: &TriProjectionFamily) -> Result<DiProjectionFamily> {
    // same pair as the two-way form
    tri_to_two(fam)
}

/// The rest against the unstable part: `(P1 + P3, P2)`.
pub fn make_t(fam: &TriProjectionFamily) -> Result<DiProjectionFamily> {
    require_valid_tri(fam)?;
    DiProjectionFamily::new(
        fam.dim(),
        fam.steps().iter().map(|[p1, p2, p3]| [p1 + p3, p2.clone()]).collect(),
    )
}

/// Identities between two nested complementary splittings `S` (stable vs.
/// rest) and `T` (rest vs. unstable).
pub fn check_st_identities(s: &DiProjectionFamily, t: &DiProjectionFamily, tol: f64) -> Result<Verdict> {
    if s.len() != t.len() || s.dim() != t.dim() {
        return Err(Error::Precondition(format!(
            "splittings differ in shape: {} vs {} steps",
            s.len(),
            t.len()
        )));
    }
    let d = s.dim();
    let eye = DMatrix::<f64>::identity(d, d);
    let names = [
        "S sums to identity",
        "T sums to identity",
        "S annihilation",
        "T annihilation",
        "S1 T1 = T1 S1 = S1",
        "S2 T1 = T1 S2 = S2 - T2 = T1 - S1",
        "T2 S2 = S2 T2 = T2",
        "T2 S1 = S1 T2 = 0",
    ];
    let mut trackers: Vec<_> = names.iter().map(|c| CheckOutcome::tracker(c, tol)).collect();
    for n in 0..s.len() {
        let [s1, s2] = s.step(n);
        let [t1, t2] = t.step(n);
        let obs = |tr: &mut crate::report::WorstTracker, v: f64| tr.observe(v, n, String::new);
        obs(&mut trackers[0], (s1 + s2 - &eye).norm());
        obs(&mut trackers[1], (t1 + t2 - &eye).norm());
        obs(&mut trackers[2], (s1 * s2).norm().max((s2 * s1).norm()));
        obs(&mut trackers[3], (t1 * t2).norm().max((t2 * t1).norm()));
        let s1t1 = s1 * t1;
        let t1s1 = t1 * s1;
        obs(&mut trackers[4], (&s1t1 - s1).norm().max((&t1s1 - s1).norm()));
        let s2t1 = s2 * t1;
        let t1s2 = t1 * s2;
        let d1 = s2 - t2;
        let d2 = t1 - s1;
        let w = (&s2t1 - &t1s2)
            .norm()
            .max((&t1s2 - &d1).norm())
            .max((&d1 - &d2).norm());
        obs(&mut trackers[5], w);
        obs(&mut trackers[6], (t2 * s2 - t2).norm().max((s2 * t2 - t2).norm()));
        obs(&mut trackers[7], (t2 * s1).norm().max((s1 * t2).norm()));
    }
    let mut checks: Vec<CheckOutcome> = trackers.into_iter().map(|t| t.finish()).collect();
    let pair = DiProjectionFamily::new(
        d,
        (0..s.len()).map(|n| [s.step(n)[0].clone(), t.step(n)[1].clone()]).collect(),
    )?;
    let pair_verdict = validate_orthogonal_pair(&pair, tol);
    for mut c in pair_verdict.checks {
        c.clause = format!("(S1, T2) {}", c.clause);
        checks.push(c);
    }
    Ok(Verdict::from_checks(checks))
}

/// Rebuild the three-way family `(S1, T2, T1 S2)` from two splittings;
/// refused unless the splitting identities hold.
pub fn reconstruct_p3(s: &DiProjectionFamily, t: &DiProjectionFamily, tol: f64) -> Result<TriProjectionFamily> {
    let v = check_st_identities(s, t, tol)?;
    if !v.pass {
        return Err(Error::Precondition(format!(
            "splittings are incompatible: {}",
            v.failing().join(", ")
        )));
    }
    TriProjectionFamily::new(
        s.dim(),
        (0..s.len())
            .map(|n| {
                let [s1, s2] = s.step(n);
                let [t1, t2] = t.step(n);
                // A nonzero projection has norm at least one, so a product
                // this small is the zero projection up to rounding.
                let mut p3 = t1 * s2;
                if p3.norm() <= tol {
                    p3.fill(0.0);
                }
                [s1.clone(), t2.clone(), p3]
            })
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RangeOrthogonality {
    /// `Pi^T Pj = 0` for `i != j`: ranges are mutually orthogonal.
    pub ranges: CheckOutcome,
    /// `|(Pi + Pj) x|^2 = |Pi x|^2 + |Pj x|^2` on test vectors.
    pub pythagoras: CheckOutcome,
    pub pass: bool,
}

/// Mutual orthogonality of the component ranges, and separately the
/// Pythagoras equality on basis vectors and seeded random unit vectors.
pub fn check_range_orthogonality<F: ProjectionFamily + ?Sized>(fam: &F, tol: f64) -> RangeOrthogonality {
    let d = fam.dim();
    let count = fam.component_count();
    let mut ranges = CheckOutcome::tracker("range orthogonality", tol);
    let mut pyth = CheckOutcome::tracker("pythagoras", tol);
    let mut rng = ChaCha8Rng::seed_from_u64(PYTHAGORAS_SEED);
    for n in 0..fam.len() {
        let comps = fam.components(n);
        for i in 0..count {
            for j in (i + 1)..count {
                ranges.observe((comps[i].transpose() * &comps[j]).norm(), n, || {
                    format!("components {} and {}", i + 1, j + 1)
                });
            }
        }
        let mut vectors: Vec<DVector<f64>> = (0..d)
            .map(|k| DVector::from_fn(d, |r, _| if r == k { 1.0 } else { 0.0 }))
            .collect();
        for _ in 0..PYTHAGORAS_SAMPLES {
            let g: DVector<f64> = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
            let norm = g.norm();
            if norm > 0.0 {
                vectors.push(g / norm);
            }
        }
        for x in &vectors {
            let images: Vec<DVector<f64>> = comps.iter().map(|p| p * x).collect();
            for i in 0..count {
                for j in (i + 1)..count {
                    let lhs = (&images[i] + &images[j]).norm_squared();
                    let rhs = images[i].norm_squared() + images[j].norm_squared();
                    pyth.observe((lhs - rhs).abs(), n, || {
                        format!("components {} and {} at x = {:?}", i + 1, j + 1, x.as_slice())
                    });
                }
            }
        }
    }
    let ranges = ranges.finish();
    let pythagoras = pyth.finish();
    RangeOrthogonality {
        pass: ranges.pass && pythagoras.pass,
        ranges,
        pythagoras,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_row_slice(v))
    }

    fn e1_family(len: usize) -> TriProjectionFamily {
        TriProjectionFamily::constant(
            [diag(&[1.0, 0.0, 0.0]), diag(&[0.0, 1.0, 0.0]), diag(&[0.0, 0.0, 1.0])],
            len,
        )
        .unwrap()
    }

    fn e1_system() -> LtvSystem {
        LtvSystem::new(3, vec![diag(&[0.5, 2.0, 1.0]); 10]).unwrap()
    }

    fn dichotomy_family(len: usize) -> TriProjectionFamily {
        TriProjectionFamily::constant(
            [diag(&[1.0, 0.0, 0.0]), diag(&[0.0, 1.0, 1.0]), diag(&[0.0, 0.0, 0.0])],
            len,
        )
        .unwrap()
    }

    #[test]
    fn e1_family_is_valid() {
        let v = validate_tri(&e1_family(11), PROJECTION_TOL);
        assert!(v.pass, "{v:?}");
    }

    #[test]
    fn half_projection_fails_idempotence() {
        let mut fam = e1_family(11);
        fam.set(4, 2, diag(&[0.0, 0.0, 0.5])).unwrap();
        let v = validate_tri(&fam, PROJECTION_TOL);
        let c = v.clause("idempotence").unwrap();
        assert!(!c.pass);
        assert_eq!(c.location.as_ref().unwrap().step, 4);
    }

    #[test]
    fn overlapping_components_fail_annihilation() {
        let mut fam = e1_family(3);
        fam.set(1, 1, diag(&[1.0, 1.0, 0.0])).unwrap();
        let v = validate_tri(&fam, PROJECTION_TOL);
        assert!(!v.clause("annihilation").unwrap().pass);
    }

    #[test]
    fn invariance_of_diagonal_family() {
        let v = check_invariance(&e1_system(), &e1_family(11), 1e-12).unwrap();
        assert!(v.pass);
        assert!(check_invariance(&e1_system(), &e1_family(10), 1e-12).is_err());
    }

    #[test]
    fn rotating_one_step_breaks_invariance() {
        let mut fam = e1_family(11);
        // quarter turn in the (e1, e2) plane swaps the first two projections
        let r = DMatrix::from_row_slice(3, 3, &[0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        for i in 0..3 {
            let p = &r * &fam.step(3)[i] * r.transpose();
            fam.set(3, i, p).unwrap();
        }
        let v = check_invariance(&e1_system(), &fam, 1e-9).unwrap();
        let c = v.clause("invariance").unwrap();
        assert!(!c.pass);
        let step = c.location.as_ref().unwrap().step;
        assert!(step == 2 || step == 3);
    }

    #[test]
    fn two_way_form() {
        let q = tri_to_two(&e1_family(2)).unwrap();
        assert_eq!(q.step(0)[0], diag(&[1.0, 0.0, 0.0]));
        assert_eq!(q.step(0)[1], diag(&[0.0, 1.0, 1.0]));
        assert!(validate_di(&q, 1e-12).pass);
        let q = tri_to_two(&dichotomy_family(2)).unwrap();
        assert_eq!(q.step(1)[1], diag(&[0.0, 1.0, 1.0]));
    }

    #[test]
    fn four_way_form_and_back() {
        let fam = e1_family(2);
        let quad = tri_to_four(&fam).unwrap();
        assert_eq!(quad.step(0)[2], diag(&[1.0, 0.0, 1.0]));
        assert_eq!(quad.step(0)[3], diag(&[0.0, 1.0, 1.0]));
        assert!(validate_quad(&quad, 1e-12).pass);
        let back = four_to_tri(&quad).unwrap();
        assert_eq!(back.step(1)[2], diag(&[0.0, 0.0, 1.0]));
        assert_eq!(back, fam);
    }

    #[test]
    fn four_way_form_without_central_part() {
        let fam = dichotomy_family(3);
        let quad = tri_to_four(&fam).unwrap();
        assert_eq!(quad.step(0)[2], quad.step(0)[0]);
        assert_eq!(quad.step(0)[3], quad.step(0)[1]);
        assert_eq!(four_to_tri(&quad).unwrap(), fam);
    }

    #[test]
    fn conversions_refuse_invalid_input() {
        let mut fam = e1_family(2);
        fam.set(0, 0, diag(&[0.5, 0.0, 0.0])).unwrap();
        assert!(tri_to_two(&fam).is_err());
        assert!(tri_to_four(&fam).is_err());
        assert!(make_s(&fam).is_err());
        assert!(make_t(&fam).is_err());
    }

    #[test]
    fn s_and_t_of_e1() {
        let fam = e1_family(2);
        let s = make_s(&fam).unwrap();
        let t = make_t(&fam).unwrap();
        assert_eq!(s.step(0), &[diag(&[1.0, 0.0, 0.0]), diag(&[0.0, 1.0, 1.0])]);
        assert_eq!(t.step(0), &[diag(&[1.0, 0.0, 1.0]), diag(&[0.0, 1.0, 0.0])]);
        let v = check_st_identities(&s, &t, 0.0).unwrap();
        assert!(v.pass, "{v:?}");
        let rebuilt = reconstruct_p3(&s, &t, 1e-12).unwrap();
        assert_eq!(rebuilt.step(0)[2], diag(&[0.0, 0.0, 1.0]));
        assert_eq!(rebuilt, fam);
    }

    #[test]
    fn s_and_t_coincide_without_central_part() {
        let fam = dichotomy_family(2);
        let s = make_s(&fam).unwrap();
        let t = make_t(&fam).unwrap();
        assert_eq!(s, t);
        let v = check_st_identities(&s, &t, 1e-14).unwrap();
        assert!(v.pass);
        let s2t1 = &s.step(0)[1] * &t.step(0)[0];
        assert_eq!(s2t1.norm(), (&s.step(0)[1] - &t.step(0)[1]).norm());
        assert_eq!(s2t1.norm(), 0.0);
        let rebuilt = reconstruct_p3(&s, &t, 1e-12).unwrap();
        assert_eq!(rebuilt.step(1)[2].norm(), 0.0);
    }

    #[test]
    fn non_nested_splittings_are_detected() {
        let s = DiProjectionFamily::constant([diag(&[1.0, 0.0]), diag(&[0.0, 1.0])], 1).unwrap();
        let t1 = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 0.0]);
        let t2 = DMatrix::identity(2, 2) - &t1;
        let t = DiProjectionFamily::constant([t1.clone(), t2], 1).unwrap();
        assert!(validate_di(&t, 1e-12).pass);
        let s2t1 = &s.step(0)[1] * &t1;
        let t1s2 = &t1 * &s.step(0)[1];
        assert!((s2t1 - t1s2).norm() > 0.5);
        let v = check_st_identities(&s, &t, 1e-9).unwrap();
        assert!(!v.clause("S2 T1 = T1 S2 = S2 - T2 = T1 - S1").unwrap().pass);
        assert!(reconstruct_p3(&s, &t, 1e-9).is_err());
    }

    #[test]
    fn oblique_pair_fails_range_orthogonality() {
        let p1 = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 0.0]);
        let p2 = DMatrix::identity(2, 2) - &p1;
        let fam = TriProjectionFamily::constant([p1.clone(), p2.clone(), DMatrix::zeros(2, 2)], 1).unwrap();
        assert!(validate_tri(&fam, 1e-12).pass);
        let ro = check_range_orthogonality(&fam, 1e-9);
        assert!(!ro.ranges.pass);
        assert!(!ro.pythagoras.pass);
        // at x = e2: |x|^2 = 1 but |P1 x|^2 + |P2 x|^2 = 1 + 2
        let x = DVector::from_row_slice(&[0.0, 1.0]);
        assert_eq!((&p1 * &x).norm_squared() + (&p2 * &x).norm_squared(), 3.0);
    }

    #[test]
    fn coordinate_family_has_orthogonal_ranges() {
        let ro = check_range_orthogonality(&e1_family(4), 1e-12);
        assert!(ro.pass);
    }

    #[test]
    fn quad_validator_catches_noncommuting_pair() {
        let r3 = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 0.0]);
        let r4 = diag(&[0.0, 1.0]);
        let quad = QuadProjectionFamily::constant(
            [DMatrix::identity(2, 2) - &r4, DMatrix::identity(2, 2) - &r3, r3, r4],
            1,
        )
        .unwrap();
        let v = validate_quad(&quad, 1e-12);
        assert!(!v.clause("commutation").unwrap().pass);
        assert!(four_to_tri(&quad).is_err());
    }

    #[test]
    fn shape_errors() {
        assert!(TriProjectionFamily::new(3, vec![]).is_err());
        let bad = [diag(&[1.0, 0.0]), diag(&[0.0, 1.0]), diag(&[0.0, 0.0, 0.0])];
        assert!(TriProjectionFamily::new(2, vec![bad]).is_err());
    }
}
