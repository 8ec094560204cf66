//! The two rescaled systems associated with a trichotomy, and checked
//! transformations between a trichotomy and the pair of dichotomies.
//!
//! With `A_n` the base coefficients,
//! `B_n = (h_{n+1}/h_n)^{a/2} (k_{n+1}/k_n)^{b/2} A_n` and
//! `C_n = (h_n/h_{n+1})^{a/2} (k_n/k_{n+1})^{b/2} A_n`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::projections::{self, DiProjectionFamily, RangeOrthogonality, TriProjectionFamily};
use crate::rates::{self, RateSequence};
use crate::report::{serialize_extended_f64, CheckOutcome, Location};
use crate::spectral::{self, BoundParams, Flag, FpDichotomyParams, Tolerances, VerificationReport};
use crate::system::LtvSystem;

/// Relative tolerance for the transition scaling and coupling identities.
pub const SCALING_TOL: f64 = 1e-10;

/// Tolerance on the recovered family and base system after a round trip.
pub const RECONSTRUCTION_TOL: f64 = 1e-12;

/// Exponent on the rate ratio in the dichotomy envelopes.
pub const DICHOTOMY_EXPONENT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    B,
    C,
}

impl Side {
    fn sign(self) -> f64 {
        match self {
            Side::B => 1.0,
            Side::C => -1.0,
        }
    }
}

fn check_exponents(a: f64, b: f64) -> Result<()> {
    // same checks as the combined rate
    rates::coupled_rate(&RateSequence::one(), &RateSequence::one(), a, b).map(|_| ())
}

/// `log` of the factor `(h_m/h_n)^{a/2} (k_m/k_n)^{b/2}`, negated for `C`.
fn log_scale(side: Side, h: &RateSequence, k: &RateSequence, a: f64, b: f64, m: usize, n: usize) -> Result<f64> {
    let mut v = 0.5 * a * h.log_ratio(m, n)?;
    if b != 0.0 {
        v += 0.5 * b * k.log_ratio(m, n)?;
    }
    Ok(side.sign() * v)
}

fn build(side: Side, sys: &LtvSystem, h: &RateSequence, k: &RateSequence, a: f64, b: f64) -> Result<LtvSystem> {
    check_exponents(a, b)?;
    h.require_defined_through(sys.horizon())?;
    k.require_defined_through(sys.horizon())?;
    let scale = (0..sys.horizon())
        .map(|n| log_scale(side, h, k, a, b, n + 1, n).map(f64::exp))
        .collect::<Result<Vec<_>>>()?;
    sys.scaled(&scale)
}

pub fn build_b(sys: &LtvSystem, h: &RateSequence, k: &RateSequence, a: f64, b: f64) -> Result<LtvSystem> {
    build(Side::B, sys, h, k, a, b)
}

pub fn build_c(sys: &LtvSystem, h: &RateSequence, k: &RateSequence, a: f64, b: f64) -> Result<LtvSystem> {
    build(Side::C, sys, h, k, a, b)
}

/// Base system, both rescaled systems, their rates and splittings.
#[derive(Debug, Clone)]
pub struct CoupledPair {
    pub base: LtvSystem,
    pub sys_b: LtvSystem,
    pub sys_c: LtvSystem,
    pub h: RateSequence,
    pub k: RateSequence,
    pub a: f64,
    pub b: f64,
    /// `h^a / k^b`
    pub tilde_h: RateSequence,
    /// `k^b / h^a`
    pub bar_h: RateSequence,
    pub s: DiProjectionFamily,
    pub t: DiProjectionFamily,
}

impl CoupledPair {
    pub fn new(sys: &LtvSystem, fam: &TriProjectionFamily, params: &BoundParams) -> Result<Self> {
        let (h, k) = (&params.stable_rate, &params.unstable_rate);
        let (a, b) = (params.decay_exponent, params.growth_exponent);
        let tilde_h = rates::coupled_rate(h, k, a, b)?;
        Ok(Self {
            base: sys.clone(),
            sys_b: build_b(sys, h, k, a, b)?,
            sys_c: build_c(sys, h, k, a, b)?,
            h: h.clone(),
            k: k.clone(),
            a,
            b,
            bar_h: rates::reciprocal_rate(&tilde_h),
            tilde_h,
            s: projections::make_s(fam)?,
            t: projections::make_t(fam)?,
        })
    }
}

/// `T_derived(m, n) = (h_m/h_n)^{+-a/2} (k_m/k_n)^{+-b/2} T_base(m, n)` on
/// every pair of the window, both sides computed independently.
#[allow(clippy::too_many_arguments)]
pub fn check_transition_scaling(
    side: Side,
    base: &LtvSystem,
    derived: &LtvSystem,
    h: &RateSequence,
    k: &RateSequence,
    a: f64,
    b: f64,
    window: usize,
) -> Result<CheckOutcome> {
    let name = match side {
        Side::B => "B scaling",
        Side::C => "C scaling",
    };
    let mut tracker = CheckOutcome::tracker(name, SCALING_TOL);
    for m in 0..=window {
        for n in 0..=m {
            let expected = base.transition(m, n)? * log_scale(side, h, k, a, b, m, n)?.exp();
            let got = derived.transition(m, n)?;
            tracker.observe(linalg::relative_frobenius(got, &expected, f64::MIN_POSITIVE), m, || {
                format!("pair ({m}, {n})")
            });
        }
    }
    Ok(tracker.finish())
}

/// `C(m, n) = (h_n/h_m)^a (k_n/k_m)^b B(m, n)` on every pair of the window.
pub fn check_coupling_relation(
    sys_b: &LtvSystem,
    sys_c: &LtvSystem,
    h: &RateSequence,
    k: &RateSequence,
    a: f64,
    b: f64,
    window: usize,
) -> Result<CheckOutcome> {
    if sys_b.dim() != sys_c.dim() {
        return Err(Error::Inconsistent(format!(
            "coupled systems have dimensions {} and {}",
            sys_b.dim(),
            sys_c.dim()
        )));
    }
    let mut tracker = CheckOutcome::tracker("coupling relation", SCALING_TOL);
    for m in 0..=window {
        for n in 0..=m {
            let factor = 2.0 * log_scale(Side::C, h, k, a, b, m, n)?;
            let expected = sys_b.transition(m, n)? * factor.exp();
            let got = sys_c.transition(m, n)?;
            tracker.observe(linalg::relative_frobenius(got, &expected, f64::MIN_POSITIVE), m, || {
                format!("pair ({m}, {n})")
            });
        }
    }
    Ok(tracker.finish())
}

/// A rescaled system with its splitting, combined rate and dichotomy verdict.
#[derive(Debug, Clone)]
pub struct ForwardOutcome {
    pub system: LtvSystem,
    pub splitting: DiProjectionFamily,
    pub rate: RateSequence,
    pub report: VerificationReport,
    pub orthogonality: RangeOrthogonality,
    /// The constant was inflated by `sqrt 2` because the ranges are not
    /// mutually orthogonal.
    pub downgraded: bool,
}

fn forward(
    side: Side,
    sys: &LtvSystem,
    fam: &TriProjectionFamily,
    params: &BoundParams,
    window: usize,
    tol: &Tolerances,
) -> Result<ForwardOutcome> {
    let pre = spectral::verify_trichotomy(sys, fam, params, window, tol)?;
    if !pre.pass {
        let mut failing: Vec<String> = pre.failing_checks().iter().map(|s| s.to_string()).collect();
        failing.extend(
            pre.bounds
                .iter()
                .filter(|b| b.pass == Some(false))
                .map(|b| format!("{} (K_min {:e})", b.label, b.k_min)),
        );
        return Err(Error::Precondition(format!(
            "input is not a trichotomy on the window: {}",
            failing.join(", ")
        )));
    }
    let orthogonality = projections::check_range_orthogonality(&fam.truncated(window + 1), tol.projection);
    let downgraded = !orthogonality.pass;
    let constant = if downgraded {
        params.constant * std::f64::consts::SQRT_2
    } else {
        params.constant
    };
    let (h, k) = (&params.stable_rate, &params.unstable_rate);
    let (a, b) = (params.decay_exponent, params.growth_exponent);
    let tilde_h = rates::coupled_rate(h, k, a, b)?;
    let (system, splitting, rate) = match side {
        Side::B => (build_b(sys, h, k, a, b)?, projections::make_s(fam)?, tilde_h),
        Side::C => (
            build_c(sys, h, k, a, b)?,
            projections::make_t(fam)?,
            rates::reciprocal_rate(&tilde_h),
        ),
    };
    let fp = FpDichotomyParams::new(
        constant,
        params.nonuniformity,
        DICHOTOMY_EXPONENT,
        rate.clone(),
        params.start_weight.clone(),
        params.end_weight.clone(),
    )?;
    let mut report = spectral::verify_fp_dichotomy(&system, &splitting, &fp, window, tol)?;
    if downgraded {
        report.flags.insert(
            0,
            Flag::PythagorasDowngrade {
                factor: std::f64::consts::SQRT_2,
            },
        );
    }
    if !report.pass {
        return Err(Error::TheoremViolation(format!(
            "rescaled system {side:?} fails its dichotomy: max K_min {:e} against {:e}; failing checks: [{}]",
            report.max_k_min,
            constant,
            report.failing_checks().join(", ")
        )));
    }
    Ok(ForwardOutcome {
        system,
        splitting,
        rate,
        report,
        orthogonality,
        downgraded,
    })
}

/// From a trichotomy to the dichotomy of `B` with `S = (P1, P2 + P3)` and
/// rate `h^a / k^b`.
pub fn forward_b(
    sys: &LtvSystem,
    fam: &TriProjectionFamily,
    params: &BoundParams,
    window: usize,
    tol: &Tolerances,
) -> Result<ForwardOutcome> {
    forward(Side::B, sys, fam, params, window, tol)
}

/// From a trichotomy to the dichotomy of `C` with `T = (P1 + P3, P2)` and
/// rate `k^b / h^a`.
pub fn forward_c(
    sys: &LtvSystem,
    fam: &TriProjectionFamily,
    params: &BoundParams,
    window: usize,
    tol: &Tolerances,
) -> Result<ForwardOutcome> {
    forward(Side::C, sys, fam, params, window, tol)
}

/// Everything the reverse direction needs.
#[derive(Debug, Clone)]
pub struct ReverseInputs<'a> {
    pub sys_b: &'a LtvSystem,
    pub s: &'a DiProjectionFamily,
    pub sys_c: &'a LtvSystem,
    pub t: &'a DiProjectionFamily,
    /// Rates, exponents, weights and the constant of the target trichotomy.
    pub params: &'a BoundParams,
    /// Constant the two dichotomies are checked against.
    pub dichotomy_constant: f64,
}

#[derive(Debug, Clone)]
pub struct ReverseOutcome {
    pub family: TriProjectionFamily,
    pub base: LtvSystem,
    pub dichotomy_b: VerificationReport,
    pub dichotomy_c: VerificationReport,
    pub report: VerificationReport,
}

/// Rebuild the base system from `B`, cross-check it against `C`,
/// reconstruct `(S1, T2, T1 S2)` and verify the trichotomy.
pub fn reverse(inputs: &ReverseInputs<'_>, window: usize, tol: &Tolerances) -> Result<ReverseOutcome> {
    let p = inputs.params;
    let (h, k) = (&p.stable_rate, &p.unstable_rate);
    let (a, b) = (p.decay_exponent, p.growth_exponent);
    if inputs.sys_b.horizon() != inputs.sys_c.horizon() {
        return Err(Error::Inconsistent(format!(
            "coupled systems have horizons {} and {}",
            inputs.sys_b.horizon(),
            inputs.sys_c.horizon()
        )));
    }
    let relation = check_coupling_relation(inputs.sys_b, inputs.sys_c, h, k, a, b, window)?;
    if !relation.pass {
        return Err(Error::Inconsistent(format!(
            "coupling relation fails with relative error {:e}{}",
            relation.worst,
            describe(&relation.location)
        )));
    }
    let identities = projections::check_st_identities(inputs.s, inputs.t, tol.projection)?;
    if !identities.pass {
        return Err(Error::Precondition(format!(
            "splittings are incompatible: {}",
            identities.failing().join(", ")
        )));
    }
    let tilde_h = rates::coupled_rate(h, k, a, b)?;
    let fp = |rate: RateSequence| {
        FpDichotomyParams::new(
            inputs.dichotomy_constant,
            p.nonuniformity,
            DICHOTOMY_EXPONENT,
            rate,
            p.start_weight.clone(),
            p.end_weight.clone(),
        )
    };
    let dichotomy_b = spectral::verify_fp_dichotomy(inputs.sys_b, inputs.s, &fp(tilde_h.clone())?, window, tol)?;
    let dichotomy_c = spectral::verify_fp_dichotomy(
        inputs.sys_c,
        inputs.t,
        &fp(rates::reciprocal_rate(&tilde_h))?,
        window,
        tol,
    )?;
    for (name, rep) in [("B", &dichotomy_b), ("C", &dichotomy_c)] {
        if !rep.pass {
            return Err(Error::Precondition(format!(
                "system {name} is not a dichotomy: max K_min {:e}; failing checks: [{}]",
                rep.max_k_min,
                rep.failing_checks().join(", ")
            )));
        }
    }
    let family = projections::reconstruct_p3(inputs.s, inputs.t, tol.projection)?;
    let base = build_c(inputs.sys_b, h, k, a, b)?;
    let cross = build_c(&base, h, k, a, b)?.max_relative_deviation(inputs.sys_c);
    if !(cross <= SCALING_TOL) {
        return Err(Error::Inconsistent(format!(
            "base system recovered from B disagrees with C by {cross:e}"
        )));
    }
    let report = spectral::verify_trichotomy(&base, &family, p, window, tol)?;
    if !report.pass {
        return Err(Error::TheoremViolation(format!(
            "reconstructed family fails the trichotomy: max K_min {:e}; failing checks: [{}]",
            report.max_k_min,
            report.failing_checks().join(", ")
        )));
    }
    Ok(ReverseOutcome {
        family,
        base,
        dichotomy_b,
        dichotomy_c,
        report,
    })
}

fn describe(loc: &Option<Location>) -> String {
    loc.as_ref()
        .map(|l| format!(" at step {} ({})", l.step, l.detail))
        .unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    ForwardB,
    ForwardC,
    CouplingRelation,
    Reverse,
    ReconstructionMismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageReport {
    pub stage: Stage,
    pub pass: bool,
    pub detail: Option<String>,
    pub report: Option<VerificationReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundTripReport {
    pub window: usize,
    pub stages: Vec<StageReport>,
    pub failed_stage: Option<Stage>,
    #[serde(serialize_with = "serialize_extended_f64")]
    pub family_error: f64,
    #[serde(serialize_with = "serialize_extended_f64")]
    pub system_error: f64,
    #[serde(serialize_with = "serialize_extended_f64")]
    pub final_k_min: f64,
    pub downgraded: bool,
    pub pass: bool,
}

impl RoundTripReport {
    fn new(window: usize) -> Self {
        Self {
            window,
            stages: Vec::new(),
            failed_stage: None,
            family_error: f64::NAN,
            system_error: f64::NAN,
            final_k_min: f64::NAN,
            downgraded: false,
            pass: false,
        }
    }

    fn record(&mut self, stage: Stage, pass: bool, detail: Option<String>, report: Option<VerificationReport>) {
        if !pass && self.failed_stage.is_none() {
            self.failed_stage = Some(stage);
        }
        self.stages.push(StageReport {
            stage,
            pass,
            detail,
            report,
        });
    }

    fn fail(mut self, stage: Stage, err: &Error) -> Self {
        self.record(stage, false, Some(err.to_string()), None);
        self
    }

    pub fn stage(&self, stage: Stage) -> Option<&StageReport> {
        self.stages.iter().find(|s| s.stage == stage)
    }
}

/// Replacement coupled systems, used in place of the ones built from the
/// base system when checking externally supplied data.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub b: Option<(LtvSystem, DiProjectionFamily)>,
    pub c: Option<(LtvSystem, DiProjectionFamily)>,
}

/// Trichotomy to dichotomies and back. Every stage is recorded; the first
/// failure ends the run and is named in `failed_stage`.
pub fn equivalence_round_trip(
    sys: &LtvSystem,
    fam: &TriProjectionFamily,
    params: &BoundParams,
    window: usize,
    tol: &Tolerances,
) -> RoundTripReport {
    equivalence_round_trip_with(sys, fam, params, window, tol, &Overrides::default())
}

pub fn equivalence_round_trip_with(
    sys: &LtvSystem,
    fam: &TriProjectionFamily,
    params: &BoundParams,
    window: usize,
    tol: &Tolerances,
    overrides: &Overrides,
) -> RoundTripReport {
    let mut out = RoundTripReport::new(window);
    let fb = match forward_b(sys, fam, params, window, tol) {
        Ok(f) => f,
        Err(e) => return out.fail(Stage::ForwardB, &e),
    };
    out.record(Stage::ForwardB, true, None, Some(fb.report.clone()));
    let fc = match forward_c(sys, fam, params, window, tol) {
        Ok(f) => f,
        Err(e) => return out.fail(Stage::ForwardC, &e),
    };
    out.record(Stage::ForwardC, true, None, Some(fc.report.clone()));
    out.downgraded = fb.downgraded || fc.downgraded;
    let (sys_b, s) = overrides.b.clone().unwrap_or((fb.system, fb.splitting));
    let (sys_c, t) = overrides.c.clone().unwrap_or((fc.system, fc.splitting));
    let (h, k) = (&params.stable_rate, &params.unstable_rate);
    let (a, b) = (params.decay_exponent, params.growth_exponent);
    let relation = check_coupling_relation(&sys_b, &sys_c, h, k, a, b, window);
    match relation {
        Ok(c) if c.pass => out.record(Stage::CouplingRelation, true, None, None),
        Ok(c) => {
            let detail = format!("relative error {:e}{}", c.worst, describe(&c.location));
            out.record(Stage::CouplingRelation, false, Some(detail), None);
            return out;
        }
        Err(e) => return out.fail(Stage::CouplingRelation, &e),
    }
    let dichotomy_constant = if out.downgraded {
        params.constant * std::f64::consts::SQRT_2
    } else {
        params.constant
    };
    let inputs = ReverseInputs {
        sys_b: &sys_b,
        s: &s,
        sys_c: &sys_c,
        t: &t,
        params,
        dichotomy_constant,
    };
    let rev = match reverse(&inputs, window, tol) {
        Ok(r) => r,
        Err(e) => return out.fail(Stage::Reverse, &e),
    };
    out.final_k_min = rev.report.max_k_min;
    out.record(Stage::Reverse, true, None, Some(rev.report));
    out.family_error = rev.family.max_deviation(fam);
    out.system_error = rev.base.max_relative_deviation(sys);
    let limit = params.constant * (1.0 + tol.verdict);
    let mut problems = Vec::new();
    if !(out.family_error <= RECONSTRUCTION_TOL) {
        problems.push(format!("family differs by {:e}", out.family_error));
    }
    if !(out.system_error <= RECONSTRUCTION_TOL) {
        problems.push(format!("base system differs by {:e}", out.system_error));
    }
    if !(out.final_k_min <= limit) {
        problems.push(format!("constant {:e} exceeds {:e}", out.final_k_min, params.constant));
    }
    let ok = problems.is_empty();
    out.record(
        Stage::ReconstructionMismatch,
        ok,
        (!ok).then(|| problems.join("; ")),
        None,
    );
    out.pass = ok;
    out
}
