//! Sharp constants for envelope inequalities over a finite window.
//!
//! A bound of the form `|T(m,n) P_n x| <= K env(m,n) |P_n x|` holds for every
//! `x` iff `K` is at least the largest singular value of `T(m,n)` restricted
//! to the range of `P_n`, divided by the envelope. The backward form
//! `|P_n x| <= K env(m,n) |T(m,n) P_n x|` uses the smallest restricted
//! singular value instead. Both are swept over every pair
//! `0 <= n <= m <= window`, including the diagonal.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, RANK_TOL};
use crate::projections::{self, DiProjectionFamily, ProjectionFamily, TriProjectionFamily, PROJECTION_TOL};
use crate::rates::RateSequence;
use crate::report::{serialize_extended_f64, CheckOutcome, Location, Verdict};
use crate::system::LtvSystem;

/// Relative slack on the declared constant: pass iff `K_min <= K (1 + tol)`.
pub const VERDICT_TOL: f64 = 1e-9;

/// Smallest singular value, relative to the coefficient norm, below which a
/// kernel restriction counts as singular.
pub const KERNEL_TOL: f64 = 1e-10;

pub const STABLE_FORWARD: &str = "stable forward";
pub const UNSTABLE_BACKWARD: &str = "unstable backward";
pub const CENTRAL_FORWARD: &str = "central forward";
pub const CENTRAL_BACKWARD: &str = "central backward";
pub const FIRST_FORWARD: &str = "first forward";
pub const SECOND_BACKWARD: &str = "second backward";

/// Constants and rates of a trichotomy.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundParams {
    /// `K > 0`
    pub constant: f64,
    /// `a > 0`, exponent on the stable rate `h`.
    pub decay_exponent: f64,
    /// `b >= 0`, exponent on the unstable rate `k`.
    pub growth_exponent: f64,
    /// `eps >= 0`, exponent on the weights `mu` and `nu`.
    pub nonuniformity: f64,
    pub stable_rate: RateSequence,
    pub unstable_rate: RateSequence,
    /// `mu`, evaluated at the start step.
    pub start_weight: RateSequence,
    /// `nu`, evaluated at the end step.
    pub end_weight: RateSequence,
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be positive and finite, got {v}"),
        })
    }
}

fn check_nonnegative(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be nonnegative and finite, got {v}"),
        })
    }
}

impl BoundParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        constant: f64,
        decay_exponent: f64,
        growth_exponent: f64,
        nonuniformity: f64,
        stable_rate: RateSequence,
        unstable_rate: RateSequence,
        start_weight: RateSequence,
        end_weight: RateSequence,
    ) -> Result<Self> {
        check_positive("K", constant)?;
        check_positive("a", decay_exponent)?;
        check_nonnegative("b", growth_exponent)?;
        check_nonnegative("eps", nonuniformity)?;
        Ok(Self {
            constant,
            decay_exponent,
            growth_exponent,
            nonuniformity,
            stable_rate,
            unstable_rate,
            start_weight,
            end_weight,
        })
    }

    /// Same rates, different constants; validated like [`new`](Self::new).
    pub fn with_constants(&self, constant: f64, a: f64, b: f64, eps: f64) -> Result<Self> {
        Self::new(
            constant,
            a,
            b,
            eps,
            self.stable_rate.clone(),
            self.unstable_rate.clone(),
            self.start_weight.clone(),
            self.end_weight.clone(),
        )
    }

    fn require_rates_through(&self, last: usize) -> Result<()> {
        self.stable_rate.require_defined_through(last)?;
        self.unstable_rate.require_defined_through(last)?;
        self.start_weight.require_defined_through(last)?;
        self.end_weight.require_defined_through(last)
    }
}

/// Constants and rates of a dichotomy with a single rate `h`, envelopes
/// `(h_n/h_m)^c mu_n^eps` (forward) and `(h_n/h_m)^c nu_m^eps` (backward).
#[derive(Debug, Clone, PartialEq)]
pub struct FpDichotomyParams {
    pub constant: f64,
    pub nonuniformity: f64,
    /// Exponent `c` on the rate ratio; one half for the coupled systems.
    pub exponent: f64,
    pub rate: RateSequence,
    pub start_weight: RateSequence,
    pub end_weight: RateSequence,
}

impl FpDichotomyParams {
    pub fn new(
        constant: f64,
        nonuniformity: f64,
        exponent: f64,
        rate: RateSequence,
        start_weight: RateSequence,
        end_weight: RateSequence,
    ) -> Result<Self> {
        check_positive("K", constant)?;
        check_nonnegative("eps", nonuniformity)?;
        if !exponent.is_finite() {
            return Err(Error::InvalidParameter {
                name: "c",
                reason: "exponent must be finite".into(),
            });
        }
        Ok(Self {
            constant,
            nonuniformity,
            exponent,
            rate,
            start_weight,
            end_weight,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// `|T P x| <= K env |P x|`
    ForwardUpper,
    /// `|P x| <= K env |T P x|`
    BackwardLower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightAt {
    Start,
    End,
}

/// `env(m, n) = (r_n / r_m)^exponent * w_j^weight_exponent` with `j` the start
/// or end step, evaluated in log space.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub rate: RateSequence,
    pub exponent: f64,
    pub weight: RateSequence,
    pub weight_exponent: f64,
    pub weight_at: WeightAt,
}

impl Envelope {
    pub fn log_value(&self, m: usize, n: usize) -> Result<f64> {
        let step = match self.weight_at {
            WeightAt::Start => n,
            WeightAt::End => m,
        };
        let mut v = self.exponent * self.rate.log_ratio(n, m)?;
        if self.weight_exponent != 0.0 {
            v += self.weight_exponent * self.weight.log_value(step)?;
        }
        if !v.is_finite() {
            return Err(Error::InvalidParameter {
                name: "envelope",
                reason: format!("envelope is not positive and finite at ({m}, {n})"),
            });
        }
        Ok(v)
    }

    /// Envelope with no weight term.
    pub fn unweighted(rate: RateSequence, exponent: f64) -> Self {
        Self {
            rate,
            exponent,
            weight: RateSequence::one(),
            weight_exponent: 0.0,
            weight_at: WeightAt::Start,
        }
    }
}

/// One inequality: which component, which direction, which envelope.
#[derive(Debug, Clone, PartialEq)]
pub struct InequalityPattern {
    pub label: &'static str,
    pub direction: Direction,
    /// One-based component index.
    pub component: usize,
    pub envelope: Envelope,
}

/// The four trichotomy inequalities exactly as defined.
pub fn trichotomy_patterns(params: &BoundParams) -> [InequalityPattern; 4] {
    let a = params.decay_exponent;
    let b = params.growth_exponent;
    let eps = params.nonuniformity;
    let mu = || params.start_weight.clone();
    let nu = || params.end_weight.clone();
    [
        InequalityPattern {
            label: STABLE_FORWARD,
            direction: Direction::ForwardUpper,
            component: 1,
            envelope: Envelope {
                rate: params.stable_rate.clone(),
                exponent: a,
                weight: mu(),
                weight_exponent: eps,
                weight_at: WeightAt::Start,
            },
        },
        InequalityPattern {
            label: UNSTABLE_BACKWARD,
            direction: Direction::BackwardLower,
            component: 2,
            envelope: Envelope {
                rate: params.unstable_rate.clone(),
                exponent: b,
                weight: nu(),
                weight_exponent: eps,
                weight_at: WeightAt::End,
            },
        },
        InequalityPattern {
            label: CENTRAL_FORWARD,
            direction: Direction::ForwardUpper,
            component: 3,
            envelope: Envelope {
                rate: params.stable_rate.clone(),
                exponent: -a,
                weight: mu(),
                weight_exponent: eps,
                weight_at: WeightAt::Start,
            },
        },
        InequalityPattern {
            label: CENTRAL_BACKWARD,
            direction: Direction::BackwardLower,
            component: 3,
            envelope: Envelope {
                rate: params.unstable_rate.clone(),
                exponent: -b,
                weight: nu(),
                weight_exponent: eps,
                weight_at: WeightAt::End,
            },
        },
    ]
}

/// The two dichotomy inequalities.
pub fn fp_dichotomy_patterns(params: &FpDichotomyParams) -> [InequalityPattern; 2] {
    [
        InequalityPattern {
            label: FIRST_FORWARD,
            direction: Direction::ForwardUpper,
            component: 1,
            envelope: Envelope {
                rate: params.rate.clone(),
                exponent: params.exponent,
                weight: params.start_weight.clone(),
                weight_exponent: params.nonuniformity,
                weight_at: WeightAt::Start,
            },
        },
        InequalityPattern {
            label: SECOND_BACKWARD,
            direction: Direction::BackwardLower,
            component: 2,
            envelope: Envelope {
                rate: params.rate.clone(),
                exponent: params.exponent,
                weight: params.end_weight.clone(),
                weight_exponent: params.nonuniformity,
                weight_at: WeightAt::End,
            },
        },
    ]
}

pub use crate::linalg::restricted_extremes;

/// Where a sharp constant is attained.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub m: usize,
    pub n: usize,
    /// Unit vector in the range of `P_n`.
    pub direction: Vec<f64>,
    /// Per-vector ratio recomputed at `direction` by direct propagation.
    #[serde(serialize_with = "serialize_extended_f64")]
    pub reproduced: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundEstimate {
    pub label: String,
    pub direction: Direction,
    pub component: usize,
    #[serde(serialize_with = "serialize_extended_f64")]
    pub k_min: f64,
    #[serde(serialize_with = "serialize_extended_f64")]
    pub log_k_min: f64,
    pub witness: Option<Witness>,
    /// Range of the projection is trivial on the whole window.
    pub vacuous: bool,
    /// Against the declared constant, when one was given.
    pub pass: Option<bool>,
}

/// Restricted extremes of `T(m, n)` on `Range P_n` for every pair of a
/// window, computed once and reduced against any number of envelopes.
#[derive(Debug, Clone)]
pub struct RestrictedSweep {
    pub window: usize,
    pub direction: Direction,
    /// `(m, n, log sigma, unit direction)`, ordered by `m` then `n`;
    /// pairs with a trivial range are omitted.
    entries: Vec<(usize, usize, f64, DVector<f64>)>,
    /// Set when propagation re-projects at every step.
    projections: Option<Vec<DMatrix<f64>>>,
}

fn require_window(sys: &LtvSystem, len: usize, window: usize) -> Result<()> {
    if window > sys.horizon() {
        return Err(Error::BeyondHorizon {
            step: window,
            horizon: sys.horizon(),
        });
    }
    if len < window + 1 {
        return Err(Error::Precondition(format!(
            "projections cover {len} steps, window {window} needs {}",
            window + 1
        )));
    }
    Ok(())
}

/// `projections[..=window]` if `P_{n+1} A_n = A_n P_n` holds at every step
/// of the window to the projection tolerance. Propagating with
/// `x_{j+1} = P_{j+1} A_j x_j` then gives `T(m, n) x` for `x` in `Range P_n`
/// without the rounding that full products leak from growing directions
/// into decaying ones.
pub fn invariant_prefix<'a>(sys: &LtvSystem, projections: &'a [DMatrix<f64>], window: usize) -> Option<&'a [DMatrix<f64>]> {
    if window > sys.horizon() || projections.len() < window + 1 {
        return None;
    }
    let invariant = (0..window).all(|n| {
        let a = sys.coeff(n);
        let lhs = &projections[n + 1] * a;
        let rhs = a * &projections[n];
        let scale = a.norm() * projections[n].norm().max(projections[n + 1].norm());
        (lhs - rhs).norm() <= PROJECTION_TOL * scale.max(f64::MIN_POSITIVE)
    });
    invariant.then(|| &projections[..=window])
}

/// `T(m, n) x`, re-projected at every step when `projections` is given.
pub fn propagate(
    sys: &LtvSystem,
    projections: Option<&[DMatrix<f64>]>,
    m: usize,
    n: usize,
    x: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    match projections {
        None => Ok(sys.transition(m, n)? * x),
        Some(ps) => {
            if m < n || m >= ps.len() || m > sys.horizon() {
                return Err(Error::NotAdmissible { m, n });
            }
            let mut y = x.clone();
            for j in n..m {
                y = &ps[j + 1] * (sys.coeff(j) * y);
            }
            Ok(y)
        }
    }
}

impl RestrictedSweep {
    pub fn new(
        sys: &LtvSystem,
        projections: &[DMatrix<f64>],
        direction: Direction,
        window: usize,
    ) -> Result<Self> {
        require_window(sys, projections.len(), window)?;
        let projected = invariant_prefix(sys, projections, window);
        let bases: Vec<DMatrix<f64>> = projections[..=window]
            .iter()
            .enumerate()
            .map(|(n, p)| {
                let b = linalg::range_basis(p, RANK_TOL);
                log::debug!("rank of projection at step {n}: {} (tol {RANK_TOL:e})", b.ncols());
                b
            })
            .collect();
        let per_start: Vec<Vec<(usize, usize, f64, DVector<f64>)>> = (0..=window)
            .into_par_iter()
            .map(|n| -> Result<_> {
                let basis = &bases[n];
                if basis.ncols() == 0 {
                    return Ok(Vec::new());
                }
                let mut out = Vec::with_capacity(window + 1 - n);
                let mut image = basis.clone();
                for m in n..=window {
                    if m > n {
                        image = match projected {
                            Some(ps) => &ps[m] * (sys.coeff(m - 1) * image),
                            None => sys.transition(m, n)? * basis,
                        };
                    }
                    let ext = linalg::restricted_extremes(&image, &DMatrix::identity(basis.ncols(), basis.ncols()));
                    let (sigma, coords) = match direction {
                        Direction::ForwardUpper => (ext.sigma_max, ext.max_direction),
                        Direction::BackwardLower => (ext.sigma_min, ext.min_direction),
                    };
                    let dir = basis * coords.expect("nonempty basis");
                    out.push((m, n, sigma.ln(), dir));
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        let mut entries: Vec<_> = per_start.into_iter().flatten().collect();
        entries.sort_by_key(|e| (e.0, e.1));
        Ok(Self {
            window,
            direction,
            entries,
            projections: projected.map(<[_]>::to_vec),
        })
    }

    /// Reduce against an envelope: max of the log ratio with the
    /// lexicographically first `(m, n)` winning ties.
    pub fn reduce(&self, sys: &LtvSystem, label: &str, component: usize, envelope: &Envelope) -> Result<BoundEstimate> {
        let mut best: Option<(f64, usize)> = None;
        for (idx, (m, n, log_sigma, _)) in self.entries.iter().enumerate() {
            let log_env = envelope.log_value(*m, *n)?;
            let log_k = match self.direction {
                Direction::ForwardUpper => log_sigma - log_env,
                Direction::BackwardLower => -log_env - log_sigma,
            };
            let better = match best {
                None => true,
                Some((b, _)) => log_k > b || (b.is_nan() && !log_k.is_nan()),
            };
            if better {
                best = Some((log_k, idx));
            }
        }
        let Some((log_k, idx)) = best else {
            return Ok(BoundEstimate {
                label: label.to_string(),
                direction: self.direction,
                component,
                k_min: 0.0,
                log_k_min: f64::NEG_INFINITY,
                witness: None,
                vacuous: true,
                pass: None,
            });
        };
        let idx = if log_k == f64::INFINITY {
            self.shortest_infinite_pair(envelope)?.unwrap_or(idx)
        } else {
            idx
        };
        let (m, n, _, dir) = &self.entries[idx];
        let reproduced = evaluate_ratio(sys, self.projections.as_deref(), self.direction, envelope, *m, *n, dir)?;
        Ok(BoundEstimate {
            label: label.to_string(),
            direction: self.direction,
            component,
            k_min: log_k.exp(),
            log_k_min: log_k,
            witness: Some(Witness {
                m: *m,
                n: *n,
                direction: dir.iter().copied().collect(),
                reproduced,
            }),
            vacuous: false,
            pass: None,
        })
    }
}

impl RestrictedSweep {
    /// Among pairs with an unbounded ratio, the one with the shortest span,
    /// then the smallest end step: it isolates the singular coefficient.
    fn shortest_infinite_pair(&self, envelope: &Envelope) -> Result<Option<usize>> {
        let mut best: Option<(usize, usize, usize)> = None;
        for (idx, (m, n, log_sigma, _)) in self.entries.iter().enumerate() {
            let log_k = -envelope.log_value(*m, *n)? - log_sigma;
            if log_k == f64::INFINITY {
                let key = (m - n, *m);
                if best.is_none_or(|(s, e, _)| key < (s, e)) {
                    best = Some((key.0, key.1, idx));
                }
            }
        }
        Ok(best.map(|b| b.2))
    }
}

/// Per-vector ratio of an inequality at `(m, n, x)`, by propagating `x`
/// alone (re-projected at every step when `projections` is given).
pub fn evaluate_ratio(
    sys: &LtvSystem,
    projections: Option<&[DMatrix<f64>]>,
    direction: Direction,
    envelope: &Envelope,
    m: usize,
    n: usize,
    x: &DVector<f64>,
) -> Result<f64> {
    let env = envelope.log_value(m, n)?.exp();
    let image = match projections {
        None => sys.apply(m, n, x)?,
        Some(_) => propagate(sys, projections, m, n, &DMatrix::from_column_slice(x.len(), 1, x.as_slice()))?
            .column(0)
            .into_owned(),
    };
    Ok(match direction {
        Direction::ForwardUpper => image.norm() / (x.norm() * env),
        Direction::BackwardLower => x.norm() / (env * image.norm()),
    })
}

/// Sharp constant of a forward-upper bound on `projections` over the window.
pub fn kmin_forward(
    sys: &LtvSystem,
    projections: &[DMatrix<f64>],
    envelope: &Envelope,
    window: usize,
) -> Result<BoundEstimate> {
    RestrictedSweep::new(sys, projections, Direction::ForwardUpper, window)?.reduce(sys, "forward", 0, envelope)
}

/// Sharp constant of a backward-lower bound; `+inf` when the restriction is
/// singular at some pair.
pub fn kmin_backward(
    sys: &LtvSystem,
    projections: &[DMatrix<f64>],
    envelope: &Envelope,
    window: usize,
) -> Result<BoundEstimate> {
    RestrictedSweep::new(sys, projections, Direction::BackwardLower, window)?.reduce(sys, "backward", 0, envelope)
}

/// Kernel isomorphism checks for selected components.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelReport {
    pub verdict: Verdict,
    /// Components that vanish identically, so their kernel is the whole
    /// space and the clause demands invertible coefficients.
    pub whole_space_kernels: Vec<usize>,
}

fn min_outcome(clause: String, tol: f64, min: f64, location: Option<Location>) -> CheckOutcome {
    let pass = min > tol;
    CheckOutcome {
        clause,
        pass,
        worst: min,
        tol,
        location: if pass { None } else { location },
    }
}

/// `sigma_min(M K) / sigma_max(M)`, infinite for an empty kernel basis.
fn relative_kernel_sigma(m: &DMatrix<f64>, kernel: &DMatrix<f64>) -> f64 {
    let ext = linalg::restricted_extremes(m, kernel);
    if ext.vacuous {
        return f64::INFINITY;
    }
    let norm = linalg::sigma_max(m);
    if norm > 0.0 {
        ext.sigma_min / norm
    } else {
        0.0
    }
}

/// The restriction of `A_n` to `Ker P_n^i` must map into `Ker P_{n+1}^i`, be
/// injective and preserve the kernel dimension, for each step of the window.
/// Injectivity is measured relative to the norm of the coefficient.
/// Two-step compositions are spot-checked for injectivity.
pub fn check_kernel_isomorphism<F: ProjectionFamily + ?Sized>(
    sys: &LtvSystem,
    fam: &F,
    components: &[usize],
    window: usize,
    tol: f64,
) -> Result<KernelReport> {
    require_window(sys, fam.len(), window)?;
    let mut checks = Vec::new();
    let mut whole_space = Vec::new();
    for &i in components {
        if i == 0 || i > fam.component_count() {
            return Err(Error::InvalidParameter {
                name: "components",
                reason: format!("component {i} out of range"),
            });
        }
        let kernels: Vec<DMatrix<f64>> = (0..=window)
            .map(|n| linalg::kernel_basis(&fam.components(n)[i - 1], RANK_TOL))
            .collect();
        if kernels.iter().all(|k| k.ncols() == fam.dim()) {
            whole_space.push(i);
        }
        let mut mapping = CheckOutcome::tracker(&format!("kernel mapping (component {i})"), PROJECTION_TOL);
        let mut dimension = CheckOutcome::tracker(&format!("kernel dimension (component {i})"), 0.0);
        let mut min_sigma = f64::INFINITY;
        let mut min_loc = None;
        for n in 0..window {
            let a = sys.coeff(n);
            let next_p = &fam.components(n + 1)[i - 1];
            let image = a * &kernels[n];
            let leak = (next_p * &image).norm();
            let scale = a.norm() * next_p.norm();
            mapping.observe(if leak == 0.0 { 0.0 } else { leak / scale.max(f64::MIN_POSITIVE) }, n, || {
                "image of kernel leaves next kernel".into()
            });
            let (dn, dm) = (kernels[n].ncols(), kernels[n + 1].ncols());
            if dn != dm {
                dimension.fail(n, || format!("kernel dimension {dn} at step {n}, {dm} at step {}", n + 1));
            }
            let s = relative_kernel_sigma(a, &kernels[n]);
            if s < min_sigma || min_loc.is_none() {
                min_sigma = min_sigma.min(s);
                min_loc = Some(Location {
                    step: n,
                    detail: format!("smallest singular value on the kernel is {s:e} of the norm"),
                });
            }
        }
        let mut composed_min = f64::INFINITY;
        let mut composed_loc = None;
        for n in 0..window.saturating_sub(1) {
            let s = relative_kernel_sigma(sys.transition(n + 2, n)?, &kernels[n]);
            if s < composed_min {
                composed_min = s;
                composed_loc = Some(Location {
                    step: n,
                    detail: format!("two-step restriction from {n} has relative singular value {s:e}"),
                });
            }
        }
        checks.push(mapping.finish());
        checks.push(min_outcome(format!("kernel injectivity (component {i})"), tol, min_sigma, min_loc));
        checks.push(dimension.finish());
        checks.push(min_outcome(
            format!("composed kernel injectivity (component {i})"),
            tol,
            composed_min,
            composed_loc,
        ));
    }
    Ok(KernelReport {
        verdict: Verdict::from_checks(checks),
        whole_space_kernels: whole_space,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub verdict: f64,
    pub projection: f64,
    pub kernel: f64,
    pub rank: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            verdict: VERDICT_TOL,
            projection: PROJECTION_TOL,
            kernel: KERNEL_TOL,
            rank: RANK_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "flag", rename_all = "kebab-case")]
pub enum Flag {
    /// Ranges are not mutually orthogonal; constants were inflated by `sqrt 2`.
    PythagorasDowngrade { factor: f64 },
    /// A component vanishes, so its kernel isomorphism forces invertibility.
    ReversibilityConsequence { component: usize },
    /// Growth-rate divergence was checked against a finite floor only.
    HeuristicDivergence { rate: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportKind {
    Trichotomy,
    FpDichotomy,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub kind: ReportKind,
    pub window: usize,
    pub constant: f64,
    pub tolerances: Tolerances,
    pub bounds: Vec<BoundEstimate>,
    pub checks: Vec<CheckOutcome>,
    pub flags: Vec<Flag>,
    #[serde(serialize_with = "serialize_extended_f64")]
    pub max_k_min: f64,
    pub pass: bool,
}

impl VerificationReport {
    pub fn bound(&self, label: &str) -> Option<&BoundEstimate> {
        self.bounds.iter().find(|b| b.label == label)
    }

    pub fn check(&self, clause: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.clause == clause)
    }

    pub fn failing_checks(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.pass).map(|c| c.clause.as_str()).collect()
    }
}

fn finish_bounds(bounds: &mut [BoundEstimate], constant: f64, tol: f64) -> (f64, bool) {
    let limit = constant * (1.0 + tol);
    let mut max = 0.0f64;
    let mut all = true;
    for b in bounds.iter_mut() {
        let ok = b.k_min <= limit;
        b.pass = Some(ok);
        all &= ok;
        if b.k_min > max || b.k_min.is_nan() {
            max = b.k_min;
        }
    }
    (max, all)
}

fn evaluate_patterns(
    sys: &LtvSystem,
    fam: &dyn ProjectionFamily,
    patterns: &[InequalityPattern],
    window: usize,
) -> Result<Vec<BoundEstimate>> {
    let mut out = Vec::with_capacity(patterns.len());
    for p in patterns {
        let seq = fam.component_sequence(p.component - 1);
        let sweep = RestrictedSweep::new(sys, &seq, p.direction, window)?;
        out.push(sweep.reduce(sys, p.label, p.component, &p.envelope)?);
    }
    Ok(out)
}

/// Full trichotomy verdict on `[0, window]`: the four sharp constants against
/// the declared one, kernel isomorphism for components 2 and 3, and the
/// structural checks on the family.
pub fn verify_trichotomy(
    sys: &LtvSystem,
    fam: &TriProjectionFamily,
    params: &BoundParams,
    window: usize,
    tol: &Tolerances,
) -> Result<VerificationReport> {
    require_window(sys, fam.len(), window)?;
    params.require_rates_through(window)?;
    let mut checks = projections::validate_tri(fam, tol.projection).checks;
    checks.extend(projections::check_invariance(sys, fam, tol.projection)?.checks);
    let mut bounds = evaluate_patterns(sys, fam, &trichotomy_patterns(params), window)?;
    let kernel = check_kernel_isomorphism(sys, fam, &[2, 3], window, tol.kernel)?;
    checks.extend(kernel.verdict.checks);
    let flags = kernel
        .whole_space_kernels
        .iter()
        .map(|&component| Flag::ReversibilityConsequence { component })
        .collect();
    let (max_k_min, bounds_ok) = finish_bounds(&mut bounds, params.constant, tol.verdict);
    let pass = bounds_ok && checks.iter().all(|c| c.pass);
    Ok(VerificationReport {
        kind: ReportKind::Trichotomy,
        window,
        constant: params.constant,
        tolerances: *tol,
        bounds,
        checks,
        flags,
        max_k_min,
        pass,
    })
}

/// Dichotomy verdict with a single positive rate: forward bound on the first
/// component, backward bound on the second, kernel isomorphism on the second.
pub fn verify_fp_dichotomy(
    sys: &LtvSystem,
    di: &DiProjectionFamily,
    params: &FpDichotomyParams,
    window: usize,
    tol: &Tolerances,
) -> Result<VerificationReport> {
    require_window(sys, di.len(), window)?;
    params.rate.require_defined_through(window)?;
    params.start_weight.require_defined_through(window)?;
    params.end_weight.require_defined_through(window)?;
    let mut checks = projections::validate_di(di, tol.projection).checks;
    checks.extend(projections::check_invariance(sys, di, tol.projection)?.checks);
    let mut bounds = evaluate_patterns(sys, di, &fp_dichotomy_patterns(params), window)?;
    let kernel = check_kernel_isomorphism(sys, di, &[2], window, tol.kernel)?;
    checks.extend(kernel.verdict.checks);
    let flags = kernel
        .whole_space_kernels
        .iter()
        .map(|&component| Flag::ReversibilityConsequence { component })
        .collect();
    let (max_k_min, bounds_ok) = finish_bounds(&mut bounds, params.constant, tol.verdict);
    let pass = bounds_ok && checks.iter().all(|c| c.pass);
    Ok(VerificationReport {
        kind: ReportKind::FpDichotomy,
        window,
        constant: params.constant,
        tolerances: *tol,
        bounds,
        checks,
        flags,
        max_k_min,
        pass,
    })
}

/// Candidate values for the exponents; every list must be nonempty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentGrid {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub eps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPoint {
    pub a: f64,
    pub b: f64,
    pub eps: f64,
    #[serde(serialize_with = "serialize_extended_f64")]
    pub k_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub window: usize,
    pub points: Vec<GridPoint>,
    pub best: GridPoint,
}

/// Relative width within which two grid constants count as tied.
const GRID_TIE_TOL: f64 = 1e-9;

/// Grid search over the exponents. Returns the point with the smallest
/// overall constant; near-ties are broken toward the smallest `eps`, then
/// the largest `a`, then the largest `b`.
pub fn estimate_exponents(
    sys: &LtvSystem,
    fam: &TriProjectionFamily,
    params: &BoundParams,
    grid: &ExponentGrid,
    window: usize,
) -> Result<(BoundParams, EstimateReport)> {
    for (name, list) in [("a", &grid.a), ("b", &grid.b), ("eps", &grid.eps)] {
        if list.is_empty() {
            return Err(Error::InvalidParameter {
                name: "grid",
                reason: format!("no candidates for `{name}`"),
            });
        }
    }
    for &a in &grid.a {
        check_positive("a", a)?;
    }
    for &b in &grid.b {
        check_nonnegative("b", b)?;
    }
    for &e in &grid.eps {
        check_nonnegative("eps", e)?;
    }
    require_window(sys, fam.len(), window)?;
    params.require_rates_through(window)?;
    let sweeps: Vec<RestrictedSweep> = trichotomy_patterns(params)
        .iter()
        .map(|p| RestrictedSweep::new(sys, &fam.component_sequence(p.component - 1), p.direction, window))
        .collect::<Result<_>>()?;
    let mut points = Vec::new();
    for &a in &grid.a {
        for &b in &grid.b {
            for &eps in &grid.eps {
                let candidate = params.with_constants(params.constant, a, b, eps)?;
                let mut k = 0.0f64;
                for (pattern, sweep) in trichotomy_patterns(&candidate).iter().zip(&sweeps) {
                    let est = sweep.reduce(sys, pattern.label, pattern.component, &pattern.envelope)?;
                    k = k.max(est.k_min);
                }
                points.push(GridPoint { a, b, eps, k_min: k });
            }
        }
    }
    let k_best = points.iter().map(|p| p.k_min).fold(f64::INFINITY, f64::min);
    let best = points
        .iter()
        .filter(|p| p.k_min <= k_best * (1.0 + GRID_TIE_TOL) || p.k_min == k_best)
        .min_by(|x, y| {
            x.eps
                .total_cmp(&y.eps)
                .then(y.a.total_cmp(&x.a))
                .then(y.b.total_cmp(&x.b))
        })
        .cloned()
        .expect("grid is nonempty");
    let best_params = params.with_constants(params.constant, best.a, best.b, best.eps)?;
    Ok((
        best_params,
        EstimateReport {
            window,
            points,
            best,
        },
    ))
}
