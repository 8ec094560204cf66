//! Fixture systems with known certificates, corrupted variants and a
//! sampling oracle for the sharp constants.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, RANK_TOL};
use crate::projections::{ProjectionFamily, TriProjectionFamily};
use crate::rates::{RateSequence, RateSpec};
use crate::spectral::{self, BoundParams, Direction, Envelope};
use crate::system::LtvSystem;

/// A system, a projection family on steps `0..=horizon`, and constants it is
/// known to satisfy.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub system: LtvSystem,
    pub family: TriProjectionFamily,
    pub params: BoundParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Stable,
    Unstable,
    Central,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Block {
    pub role: Role,
    pub dim: usize,
}

/// Diagonal entries of the central block.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CentralPattern {
    #[default]
    Identity,
    /// Alternating 2 and 1/2, which needs `K = 2`.
    Alternating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateBindings {
    pub h: RateSpec,
    pub k: RateSpec,
    pub mu: RateSpec,
    pub nu: RateSpec,
}

/// Alternating-sign perturbation `exp(eps (-1)^{n+1} (2n+1))` of the
/// stable coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Nonuniform {
    pub eps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Defect {
    BreakAnnihilation,
    BreakInvariance,
    KillKernelDirection,
    SkewProjections,
}

impl Defect {
    pub const ALL: [Defect; 4] = [
        Defect::BreakAnnihilation,
        Defect::BreakInvariance,
        Defect::KillKernelDirection,
        Defect::SkewProjections,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Defect::BreakAnnihilation => "break-annihilation",
            Defect::BreakInvariance => "break-invariance",
            Defect::KillKernelDirection => "kill-kernel-direction",
            Defect::SkewProjections => "skew-projections",
        }
    }
}

impl fmt::Display for Defect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Defect {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Defect::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::InvalidSpec(format!("unknown defect `{s}`")))
    }
}

/// Block-diagonal generator description, deserializable from documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub horizon: usize,
    pub blocks: Vec<Block>,
    pub rates: RateBindings,
    pub a: f64,
    pub b: f64,
    #[serde(default)]
    pub eps: f64,
    #[serde(default)]
    pub central: CentralPattern,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonuniform: Option<Nonuniform>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corruption: Option<Defect>,
}

fn spec_error(msg: impl Into<String>) -> Error {
    Error::InvalidSpec(msg.into())
}

fn require_nondecreasing(name: &str, r: &RateSequence, last: usize) -> Result<()> {
    let logs = r.log_values(last + 1)?;
    if let Some(n) = (1..logs.len()).find(|&n| logs[n] < logs[n - 1]) {
        return Err(spec_error(format!("rate `{name}` decreases at step {n}")));
    }
    Ok(())
}

fn require_at_least_one(name: &str, r: &RateSequence, last: usize) -> Result<()> {
    let logs = r.log_values(last + 1)?;
    if let Some(n) = logs.iter().position(|&l| l < 0.0) {
        return Err(spec_error(format!("weight `{name}` is below 1 at step {n}")));
    }
    Ok(())
}

fn exponential_base(name: &str, spec: &RateSpec) -> Result<f64> {
    match spec {
        RateSpec::Exp { lambda } if *lambda > 1.0 => Ok(lambda.ln()),
        _ => Err(spec_error(format!(
            "nonuniform stable blocks need `{name}` exponential with base above 1"
        ))),
    }
}

/// Alternating pattern `(-1)^{n+1} (2n+1)`, whose partial sums telescope to
/// `(-1)^m m - (-1)^n n`.
fn oscillation(n: usize) -> f64 {
    let s = if n.is_multiple_of(2) { -1.0 } else { 1.0 };
    s * (2 * n + 1) as f64
}

/// Diagonal system with coordinate projections. Stable coordinate `j` of a
/// block decays with exponent `a (1 + j)` against `h`, unstable coordinate
/// `j` grows with exponent `b (1 + j)` against `k`, so the certificate holds
/// with `K = 1` (or `K = 2` for alternating central entries). A nonuniform
/// perturbation with base `lambda_h` for `h` and `lambda_mu` for `mu` lowers
/// the certified decay to `a - eps / ln lambda_h` and raises the
/// nonuniformity to `2 eps / ln lambda_mu`.
pub fn gen_block_diagonal(spec: &GeneratorSpec) -> Result<Fixture> {
    let d: usize = spec.blocks.iter().map(|b| b.dim).sum();
    if d == 0 {
        return Err(spec_error("blocks have total dimension 0"));
    }
    if spec.horizon == 0 {
        return Err(spec_error("horizon must be at least 1"));
    }
    let n_steps = spec.horizon;
    let h = spec.rates.h.build()?;
    let k = spec.rates.k.build()?;
    let mu = spec.rates.mu.build()?;
    let nu = spec.rates.nu.build()?;
    for r in [&h, &k, &mu, &nu] {
        r.require_defined_through(n_steps)?;
    }
    require_nondecreasing("h", &h, n_steps)?;
    require_nondecreasing("k", &k, n_steps)?;
    let (mut a_cert, mut eps_cert) = (spec.a, spec.eps);
    let wobble = match spec.nonuniform {
        Some(Nonuniform { eps }) if eps != 0.0 => {
            if !(eps.is_finite() && eps > 0.0) {
                return Err(spec_error(format!("nonuniform eps must be positive, got {eps}")));
            }
            a_cert = spec.a - eps / exponential_base("h", &spec.rates.h)?;
            eps_cert = eps_cert.max(2.0 * eps / exponential_base("mu", &spec.rates.mu)?);
            if !(a_cert > 0.0) {
                return Err(spec_error(format!(
                    "nonuniform eps {eps} leaves no decay (certified exponent {a_cert})"
                )));
            }
            eps
        }
        _ => 0.0,
    };
    let constant = match spec.central {
        CentralPattern::Alternating if spec.blocks.iter().any(|b| b.role == Role::Central && b.dim > 0) => 2.0,
        _ => 1.0,
    };
    let params = BoundParams::new(constant, a_cert, spec.b, eps_cert, h.clone(), k.clone(), mu.clone(), nu.clone())?;
    if params.nonuniformity > 0.0 {
        require_at_least_one("mu", &mu, n_steps)?;
        require_at_least_one("nu", &nu, n_steps)?;
    }
    let mut roles = Vec::with_capacity(d);
    for block in &spec.blocks {
        roles.extend((0..block.dim).map(|j| (block.role, j)));
    }
    let mut coeffs = Vec::with_capacity(n_steps);
    for n in 0..n_steps {
        let mut entries = Vec::with_capacity(d);
        for &(role, j) in &roles {
            let factor = 1.0 + j as f64;
            let log_entry = match role {
                Role::Stable => -spec.a * factor * h.log_ratio(n + 1, n)? + wobble * oscillation(n),
                Role::Unstable if spec.b == 0.0 => 0.0,
                Role::Unstable => spec.b * factor * k.log_ratio(n + 1, n)?,
                Role::Central => match spec.central {
                    CentralPattern::Identity => 0.0,
                    CentralPattern::Alternating if (n + j) % 2 == 0 => std::f64::consts::LN_2,
                    CentralPattern::Alternating => -std::f64::consts::LN_2,
                },
            };
            entries.push(log_entry.exp());
        }
        coeffs.push(DMatrix::from_diagonal(&DVector::from_vec(entries)));
    }
    let selector = |want: Role| {
        DMatrix::from_diagonal(&DVector::from_iterator(
            d,
            roles.iter().map(|&(role, _)| if role == want { 1.0 } else { 0.0 }),
        ))
    };
    let family = TriProjectionFamily::constant(
        [selector(Role::Stable), selector(Role::Unstable), selector(Role::Central)],
        n_steps + 1,
    )?;
    let mut fixture = Fixture {
        system: LtvSystem::new(d, coeffs)?,
        family,
        params,
    };
    if let Some(seed) = spec.rotation {
        fixture = gen_rotated(&fixture, seed)?;
    }
    if let Some(defect) = spec.corruption {
        fixture = corrupt(&fixture, defect)?;
    }
    Ok(fixture)
}

/// Certificate for the scalar nonuniform system, with a pair where the
/// bound is attained.
#[derive(Debug, Clone)]
pub struct NonuniformScalar {
    pub fixture: Fixture,
    pub tight_pair: (usize, usize),
}

/// Scalar `A_n = exp(-a + eps (-1)^{n+1} (2n+1))`, so that
/// `A(m, n) = exp(-a (m - n) + eps ((-1)^m m - (-1)^n n))`. Certified with
/// decay `a - eps`, nonuniformity `2 eps`, `h = k = mu = nu = e^n` and
/// `K = 1`; equality holds at every `(m even, n odd)`.
pub fn gen_nonuniform_scalar(a: f64, eps: f64, horizon: usize) -> Result<NonuniformScalar> {
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(spec_error(format!("eps must be nonnegative, got {eps}")));
    }
    if !(a.is_finite() && eps < a) {
        return Err(spec_error(format!("need eps < a, got eps = {eps}, a = {a}")));
    }
    if horizon == 0 {
        return Err(spec_error("horizon must be at least 1"));
    }
    let coeffs = (0..horizon)
        .map(|n| DMatrix::from_element(1, 1, (-a + eps * oscillation(n)).exp()))
        .collect();
    let e = RateSequence::exponential(std::f64::consts::E)?;
    let params = BoundParams::new(1.0, a - eps, 1.0, 2.0 * eps, e.clone(), e.clone(), e.clone(), e)?;
    let one = DMatrix::from_element(1, 1, 1.0);
    let zero = DMatrix::zeros(1, 1);
    let family = TriProjectionFamily::constant([one, zero.clone(), zero], horizon + 1)?;
    Ok(NonuniformScalar {
        fixture: Fixture {
            system: LtvSystem::new(1, coeffs)?,
            family,
            params,
        },
        tight_pair: (2, 1),
    })
}

/// Orthogonal matrix from the QR factorization of a Gaussian matrix, with
/// the signs fixed so that `R` has a positive diagonal.
fn random_orthogonal(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    loop {
        let g: DMatrix<f64> = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(rng));
        let qr = g.qr();
        let r = qr.r();
        if (0..d).any(|i| r[(i, i)].abs() < 1e-8) {
            continue;
        }
        let mut q = qr.q();
        for j in 0..d {
            if r[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        return q;
    }
}

/// Change of coordinates by seeded orthogonal `U_n`:
/// `A'_n = U_{n+1} A_n U_n^T`, `P'_n = U_n P_n U_n^T`, same certificate.
pub fn gen_rotated(base: &Fixture, seed: u64) -> Result<Fixture> {
    let d = base.system.dim();
    let horizon = base.system.horizon();
    let len = base.family.len().max(horizon + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let us: Vec<DMatrix<f64>> = (0..len).map(|_| random_orthogonal(d, &mut rng)).collect();
    let coeffs = (0..horizon)
        .map(|n| &us[n + 1] * base.system.coeff(n) * us[n].transpose())
        .collect();
    let steps = base
        .family
        .steps()
        .iter()
        .enumerate()
        .map(|(n, comps)| comps.clone().map(|p| &us[n] * p * us[n].transpose()))
        .collect();
    Ok(Fixture {
        system: LtvSystem::new(d, coeffs)?,
        family: TriProjectionFamily::new(d, steps)?,
        params: base.params.clone(),
    })
}

fn unit_in_range(p: &DMatrix<f64>) -> Option<DVector<f64>> {
    let basis = linalg::range_basis(p, RANK_TOL);
    (basis.ncols() > 0).then(|| basis.column(0).into_owned())
}

fn defect_step(horizon: usize) -> usize {
    3.min(horizon - 1)
}

/// Cross terms `X_n = P1_n X_n Pj_n` carried along the flow by
/// `X_{n+1} = A_n X_n (A_n Pj_n)^+`, so that `P1 + X` stays invariant.
fn transported_cross_terms(fixture: &Fixture, target: usize) -> Result<Vec<DMatrix<f64>>> {
    let fam = &fixture.family;
    let (p1, pj) = (&fam.step(0)[0], &fam.step(0)[target]);
    let u = unit_in_range(p1).ok_or_else(|| Error::Precondition("stable component is zero".into()))?;
    let w = unit_in_range(&pj.transpose())
        .ok_or_else(|| Error::Precondition(format!("component {} is zero", target + 1)))?;
    if fam.len() != fixture.system.horizon() + 1 {
        return Err(Error::Precondition(format!(
            "family covers {} steps, system needs {}",
            fam.len(),
            fixture.system.horizon() + 1
        )));
    }
    let mut xs = vec![&u * w.transpose()];
    for n in 0..fixture.system.horizon() {
        let a = fixture.system.coeff(n);
        let pinv = linalg::pseudo_inverse(&(a * &fam.step(n)[target]), RANK_TOL);
        let next = a * &xs[n] * pinv;
        xs.push(next);
    }
    Ok(xs)
}

/// Minimal change that breaks one clause of the definition.
///
/// * `break-annihilation`: `P1 + X` with `X` from the stable to the unstable
///   range, carried so that invariance, kernels and range orthogonality
///   survive while `P1 P2 = X != 0`.
/// * `skew-projections`: `P1 + X`, `P3 - X` (the unstable component when the
///   central one vanishes); a valid invariant family with oblique ranges.
/// * `kill-kernel-direction`: compose `A_3` with the orthogonal projector
///   killing a central direction (stable if there is none).
/// * `break-invariance`: add a rank-one term mapping the unstable range at
///   step 3 into the stable range at step 4.
pub fn corrupt(fixture: &Fixture, defect: Defect) -> Result<Fixture> {
    let mut out = fixture.clone();
    let horizon = fixture.system.horizon();
    let d = fixture.system.dim();
    match defect {
        Defect::BreakAnnihilation => {
            let xs = transported_cross_terms(fixture, 1)?;
            for (n, x) in xs.iter().enumerate() {
                out.family.set(n, 0, &fixture.family.step(n)[0] + x)?;
            }
        }
        Defect::SkewProjections => {
            let target = if unit_in_range(&fixture.family.step(0)[2]).is_some() { 2 } else { 1 };
            let xs = transported_cross_terms(fixture, target)?;
            for (n, x) in xs.iter().enumerate() {
                out.family.set(n, 0, &fixture.family.step(n)[0] + x)?;
                out.family.set(n, target, &fixture.family.step(n)[target] - x)?;
            }
        }
        Defect::KillKernelDirection => {
            let s = defect_step(horizon);
            let comps = fixture.family.step(s);
            let v = unit_in_range(&comps[2])
                .or_else(|| unit_in_range(&comps[0]))
                .ok_or_else(|| Error::Precondition("no central or stable direction to kill".into()))?;
            let killer = DMatrix::identity(d, d) - &v * v.transpose();
            let mut coeffs = fixture.system.coeffs().to_vec();
            coeffs[s] = &coeffs[s] * killer;
            out.system = LtvSystem::new(d, coeffs)?;
        }
        Defect::BreakInvariance => {
            let s = defect_step(horizon);
            let u = unit_in_range(&fixture.family.step(s + 1)[0])
                .ok_or_else(|| Error::Precondition("stable component is zero".into()))?;
            let w = unit_in_range(&fixture.family.step(s)[1])
                .ok_or_else(|| Error::Precondition("unstable component is zero".into()))?;
            let mut coeffs = fixture.system.coeffs().to_vec();
            let scale = coeffs[s].norm();
            coeffs[s] += &u * w.transpose() * scale;
            out.system = LtvSystem::new(d, coeffs)?;
        }
    }
    Ok(out)
}

/// Lower bound on the sharp constant: the largest per-vector ratio over
/// `samples` random unit vectors of `Range P_n` for every pair of the
/// window, propagated like the spectral sweep. Each pair draws from its own
/// stream of the seeded generator.
/// Zero if every range is trivial.
pub fn oracle_kmin(
    sys: &LtvSystem,
    projections: &[DMatrix<f64>],
    envelope: &Envelope,
    direction: Direction,
    window: usize,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if samples == 0 {
        return Err(Error::InvalidParameter {
            name: "samples",
            reason: "need at least one sample".into(),
        });
    }
    if window > sys.horizon() || projections.len() < window + 1 {
        return Err(Error::BeyondHorizon {
            step: window,
            horizon: sys.horizon().min(projections.len().saturating_sub(1)),
        });
    }
    let d = sys.dim();
    let projected = spectral::invariant_prefix(sys, projections, window);
    let pairs: Vec<(usize, usize)> = (0..=window).flat_map(|m| (0..=m).map(move |n| (m, n))).collect();
    let maxima = pairs
        .par_iter()
        .enumerate()
        .map(|(idx, &(m, n))| -> Result<f64> {
            let p = &projections[n];
            if linalg::range_basis(p, RANK_TOL).ncols() == 0 {
                return Ok(0.0);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(idx as u64);
            // Propagation is linear, so carrying `P_n` once gives the image
            // of every sample `P_n g` as a single product.
            let carried = spectral::propagate(sys, projected, m, n, p)?;
            let env = envelope.log_value(m, n)?.exp();
            let mut best = 0.0f64;
            for _ in 0..samples {
                let g: DVector<f64> = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
                let norm = (p * &g).norm();
                if norm == 0.0 {
                    continue;
                }
                let image = (&carried * &g).norm();
                let r = match direction {
                    Direction::ForwardUpper => image / (norm * env),
                    Direction::BackwardLower => norm / (env * image),
                };
                best = best.max(r);
            }
            Ok(best)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(maxima.into_iter().fold(0.0, f64::max))
}

fn exp_rate(lambda: f64) -> RateSpec {
    RateSpec::Exp { lambda }
}

/// Stable, unstable and central coordinate with `A_n = diag(1/2, 2, 1)`,
/// `h = k = 2^n`, `mu = nu = n + 1`, `a = b = 1`, horizon 10.
pub fn e1_spec() -> GeneratorSpec {
    GeneratorSpec {
        horizon: 10,
        blocks: vec![
            Block { role: Role::Stable, dim: 1 },
            Block { role: Role::Unstable, dim: 1 },
            Block { role: Role::Central, dim: 1 },
        ],
        rates: RateBindings {
            h: exp_rate(2.0),
            k: exp_rate(2.0),
            mu: RateSpec::Poly { p: 1.0 },
            nu: RateSpec::Poly { p: 1.0 },
        },
        a: 1.0,
        b: 1.0,
        eps: 0.0,
        central: CentralPattern::Identity,
        nonuniform: None,
        rotation: None,
        corruption: None,
    }
}

pub fn e1() -> Fixture {
    gen_block_diagonal(&e1_spec()).expect("fixed spec is valid")
}

/// Scalar nonuniform system with `a = 1`, `eps = 1/4`.
pub fn e2(horizon: usize) -> NonuniformScalar {
    gen_nonuniform_scalar(1.0, 0.25, horizon).expect("fixed parameters are valid")
}

/// Three coordinates: the nonuniform stable entry of [`e2`], an unstable
/// entry `e` and a central 1, with `h = k = mu = nu = e^n`. Certified with
/// `K = 1`, `a = 3/4`, `b = 1`, `eps = 1/2`.
pub fn e2_embedded_spec(horizon: usize) -> GeneratorSpec {
    let e = exp_rate(std::f64::consts::E);
    GeneratorSpec {
        horizon,
        blocks: vec![
            Block { role: Role::Stable, dim: 1 },
            Block { role: Role::Unstable, dim: 1 },
            Block { role: Role::Central, dim: 1 },
        ],
        rates: RateBindings {
            h: e.clone(),
            k: e.clone(),
            mu: e.clone(),
            nu: e,
        },
        a: 1.0,
        b: 1.0,
        eps: 0.0,
        central: CentralPattern::Identity,
        nonuniform: Some(Nonuniform { eps: 0.25 }),
        rotation: None,
        corruption: None,
    }
}

pub fn e2_embedded(horizon: usize) -> Fixture {
    gen_block_diagonal(&e2_embedded_spec(horizon)).expect("fixed spec is valid")
}
