//! Positive rate sequences `n -> r_n`, stored and combined in log space.
//!
//! Exponential and polynomial sequences are closed-form and defined for every
//! step; tabulated sequences are defined on their table only. Products of
//! powers of rates (such as `h^a / k^b`) are kept symbolic as weighted sums of
//! log-sequences so that reciprocals and ratios never leave log space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default value the rate must reach at the end of the window for the
/// (heuristic) divergence check of a growth rate.
pub const DEFAULT_DIVERGENCE_FLOOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RateSequence {
    repr: Repr,
}

#[derive(Debug, Clone, PartialEq)]
enum Repr {
    Exponential { lambda: f64, log_lambda: f64 },
    Polynomial { p: f64 },
    Tabulated { logs: Vec<f64> },
    /// `sum_i c_i * log r_i(n)`
    Weighted(Vec<(f64, RateSequence)>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RateKind {
    Exponential { lambda: f64 },
    Polynomial { p: f64 },
    Tabulated,
}

impl RateSequence {
    /// `r_n = lambda^n`.
    pub fn exponential(lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidRate(format!(
                "exponential base must be positive and finite, got {lambda}"
            )));
        }
        Ok(Self {
            repr: Repr::Exponential {
                lambda,
                log_lambda: lambda.ln(),
            },
        })
    }

    /// `r_n = (n + 1)^p`.
    pub fn polynomial(p: f64) -> Result<Self> {
        if !p.is_finite() {
            return Err(Error::InvalidRate(format!("polynomial degree must be finite, got {p}")));
        }
        Ok(Self {
            repr: Repr::Polynomial { p },
        })
    }

    /// Tabulated from direct values; every value must be positive and finite.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidRate("table is empty".into()));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::InvalidRate(format!(
                "table value at step {i} must be positive and finite, got {v}"
            )));
        }
        Ok(Self {
            repr: Repr::Tabulated {
                logs: values.iter().map(|v| v.ln()).collect(),
            },
        })
    }

    /// Tabulated from log-values; every entry must be finite.
    pub fn from_log_values(logs: Vec<f64>) -> Result<Self> {
        if logs.is_empty() {
            return Err(Error::InvalidRate("table is empty".into()));
        }
        if let Some((i, v)) = logs.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidRate(format!(
                "log-value at step {i} must be finite, got {v}"
            )));
        }
        Ok(Self {
            repr: Repr::Tabulated { logs },
        })
    }

    /// The constant sequence 1.
    pub fn one() -> Self {
        Self {
            repr: Repr::Exponential {
                lambda: 1.0,
                log_lambda: 0.0,
            },
        }
    }

    pub fn kind(&self) -> RateKind {
        match &self.repr {
            Repr::Exponential { lambda, .. } => RateKind::Exponential { lambda: *lambda },
            Repr::Polynomial { p } => RateKind::Polynomial { p: *p },
            Repr::Tabulated { .. } | Repr::Weighted(_) => RateKind::Tabulated,
        }
    }

    /// Number of steps on which the sequence is defined; `None` if unbounded.
    pub fn domain_len(&self) -> Option<usize> {
        match &self.repr {
            Repr::Exponential { .. } | Repr::Polynomial { .. } => None,
            Repr::Tabulated { logs } => Some(logs.len()),
            Repr::Weighted(terms) => terms.iter().filter_map(|(_, r)| r.domain_len()).min(),
        }
    }

    /// Error unless the sequence is defined on steps `0..=last`.
    pub fn require_defined_through(&self, last: usize) -> Result<()> {
        match self.domain_len() {
            Some(len) if len <= last => Err(Error::RateUndefined { step: last, len }),
            _ => Ok(()),
        }
    }

    pub fn log_value(&self, n: usize) -> Result<f64> {
        match &self.repr {
            Repr::Exponential { log_lambda, .. } => Ok(n as f64 * log_lambda),
            Repr::Polynomial { p } => Ok(p * ((n + 1) as f64).ln()),
            Repr::Tabulated { logs } => logs.get(n).copied().ok_or(Error::RateUndefined {
                step: n,
                len: logs.len(),
            }),
            Repr::Weighted(terms) => {
                let mut acc = 0.0;
                for (c, r) in terms {
                    acc += c * r.log_value(n)?;
                }
                Ok(acc)
            }
        }
    }

    pub fn value(&self, n: usize) -> Result<f64> {
        self.log_value(n).map(f64::exp)
    }

    /// `log(r_m / r_n)`.
    pub fn log_ratio(&self, m: usize, n: usize) -> Result<f64> {
        match &self.repr {
            Repr::Exponential { log_lambda, .. } => Ok((m as f64 - n as f64) * log_lambda),
            Repr::Polynomial { p } => Ok(p * (((m + 1) as f64).ln() - ((n + 1) as f64).ln())),
            Repr::Tabulated { .. } => Ok(self.log_value(m)? - self.log_value(n)?),
            Repr::Weighted(terms) => {
                let mut acc = 0.0;
                for (c, r) in terms {
                    acc += c * r.log_ratio(m, n)?;
                }
                Ok(acc)
            }
        }
    }

    /// Log-values on steps `0..len`.
    pub fn log_values(&self, len: usize) -> Result<Vec<f64>> {
        (0..len).map(|n| self.log_value(n)).collect()
    }

    /// Freeze into a log table of `len` entries.
    pub fn tabulate(&self, len: usize) -> Result<RateSequence> {
        RateSequence::from_log_values(self.log_values(len)?)
    }

    /// Pointwise reciprocal `1 / r_n` (negated log-values).
    pub fn reciprocal(&self) -> RateSequence {
        let terms = match &self.repr {
            Repr::Weighted(terms) => terms.iter().map(|(c, r)| (-c, r.clone())).collect(),
            _ => vec![(-1.0, self.clone())],
        };
        RateSequence {
            repr: Repr::Weighted(terms),
        }
    }
}

/// The combined rate `h_n^a / k_n^b`.
pub fn coupled_rate(h: &RateSequence, k: &RateSequence, a: f64, b: f64) -> Result<RateSequence> {
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::InvalidParameter {
            name: "a",
            reason: format!("must be positive, got {a}"),
        });
    }
    if !(b.is_finite() && b >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "b",
            reason: format!("must be nonnegative, got {b}"),
        });
    }
    let mut terms = vec![(a, h.clone())];
    if b != 0.0 {
        terms.push((-b, k.clone()));
    }
    Ok(RateSequence {
        repr: Repr::Weighted(terms),
    })
}

/// Reciprocal of a combined rate, `k_n^b / h_n^a`.
pub fn reciprocal_rate(r: &RateSequence) -> RateSequence {
    r.reciprocal()
}

/// Serialized form of a rate: `{"kind": "exp", "lambda": 2}`,
/// `{"kind": "poly", "p": 1}`, or `{"kind": "table", "values": [...]}` with
/// `log_values` accepted in place of `values`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum RateSpec {
    Exp {
        lambda: f64,
    },
    Poly {
        p: f64,
    },
    Table {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        values: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        log_values: Option<Vec<f64>>,
    },
}

impl RateSpec {
    pub fn build(&self) -> Result<RateSequence> {
        match self {
            RateSpec::Exp { lambda } => RateSequence::exponential(*lambda),
            RateSpec::Poly { p } => RateSequence::polynomial(*p),
            RateSpec::Table {
                values: Some(v),
                log_values: None,
            } => RateSequence::from_values(v),
            RateSpec::Table {
                values: None,
                log_values: Some(l),
            } => RateSequence::from_log_values(l.clone()),
            RateSpec::Table { .. } => Err(Error::InvalidRate(
                "table needs exactly one of `values` and `log_values`".into(),
            )),
        }
    }

    /// Closed forms are kept; anything else is frozen to a table of `len`
    /// entries, as direct values when they reproduce the log-values exactly.
    pub fn describe(r: &RateSequence, len: usize) -> Result<RateSpec> {
        match &r.repr {
            Repr::Exponential { lambda, .. } => Ok(RateSpec::Exp { lambda: *lambda }),
            Repr::Polynomial { p } => Ok(RateSpec::Poly { p: *p }),
            _ => {
                let logs = r.log_values(len)?;
                let values: Vec<f64> = logs.iter().map(|l| l.exp()).collect();
                if values.iter().zip(&logs).all(|(v, l)| v.ln().to_bits() == l.to_bits()) {
                    Ok(RateSpec::Table {
                        values: Some(values),
                        log_values: None,
                    })
                } else {
                    Ok(RateSpec::Table {
                        values: None,
                        log_values: Some(logs),
                    })
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "violation", rename_all = "kebab-case")]
pub enum GrowthViolation {
    NotOneAtZero { value: f64 },
    Decreasing { step: usize, previous: f64, value: f64 },
    BelowDivergenceFloor { value: f64, floor: f64 },
    Undefined { step: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthRateVerdict {
    pub pass: bool,
    pub window: usize,
    pub floor: f64,
    /// The divergence check is a finite-window stand-in for `r_n -> inf`.
    pub heuristic: bool,
    pub violation: Option<GrowthViolation>,
}

/// Check the growth-rate axioms on `[0, window]`: `r_0 = 1` exactly, `r`
/// nondecreasing, and `r_window >= floor` as a stand-in for divergence.
pub fn validate_growth_rate(r: &RateSequence, window: usize, floor: f64) -> Result<GrowthRateVerdict> {
    if window < 2 {
        return Err(Error::InvalidParameter {
            name: "window",
            reason: format!("growth rate validation needs window >= 2, got {window}"),
        });
    }
    if !(floor.is_finite() && floor > 0.0) {
        return Err(Error::InvalidParameter {
            name: "floor",
            reason: format!("must be positive, got {floor}"),
        });
    }
    let verdict = |violation: Option<GrowthViolation>| GrowthRateVerdict {
        pass: violation.is_none(),
        window,
        floor,
        heuristic: true,
        violation,
    };
    let mut logs = Vec::with_capacity(window + 1);
    for n in 0..=window {
        match r.log_value(n) {
            Ok(l) => logs.push(l),
            Err(_) => return Ok(verdict(Some(GrowthViolation::Undefined { step: n }))),
        }
    }
    if logs[0] != 0.0 {
        return Ok(verdict(Some(GrowthViolation::NotOneAtZero {
            value: logs[0].exp(),
        })));
    }
    for n in 1..=window {
        if logs[n] < logs[n - 1] {
            return Ok(verdict(Some(GrowthViolation::Decreasing {
                step: n,
                previous: logs[n - 1].exp(),
                value: logs[n].exp(),
            })));
        }
    }
    if logs[window] < floor.ln() {
        return Ok(verdict(Some(GrowthViolation::BelowDivergenceFloor {
            value: logs[window].exp(),
            floor,
        })));
    }
    Ok(verdict(None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn powers_of_two_are_a_growth_rate() {
        let h = RateSequence::exponential(2.0).unwrap();
        let v = validate_growth_rate(&h, 40, 100.0).unwrap();
        assert!(v.pass, "{v:?}");
        assert!(v.heuristic);
        assert_eq!(v.window, 40);
    }

    #[test]
    fn decreasing_sequence_fails_at_first_step() {
        let r = RateSequence::polynomial(-1.0).unwrap();
        assert_eq!(r.value(0).unwrap(), 1.0);
        let v = validate_growth_rate(&r, 40, 10.0).unwrap();
        assert!(matches!(v.violation, Some(GrowthViolation::Decreasing { step: 1, .. })));
    }

    #[test]
    fn linear_rate_and_divergence_floor() {
        let mu = RateSequence::polynomial(1.0).unwrap();
        let fail = validate_growth_rate(&mu, 40, 100.0).unwrap();
        match fail.violation {
            Some(GrowthViolation::BelowDivergenceFloor { value, floor }) => {
                assert_relative_eq!(value, 41.0, max_relative = 1e-14);
                assert_eq!(floor, 100.0);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(validate_growth_rate(&mu, 40, 40.0).unwrap().pass);
    }

    #[test]
    fn not_one_at_zero_and_short_window() {
        let r = RateSequence::from_values(&[2.0, 3.0, 4.0]).unwrap();
        let v = validate_growth_rate(&r, 2, 1.0).unwrap();
        assert!(matches!(v.violation, Some(GrowthViolation::NotOneAtZero { .. })));
        assert!(validate_growth_rate(&r, 1, 1.0).is_err());
        let short = RateSequence::from_values(&[1.0, 2.0]).unwrap();
        let v = validate_growth_rate(&short, 5, 1.0).unwrap();
        assert_eq!(v.violation, Some(GrowthViolation::Undefined { step: 2 }));
    }

    #[test]
    fn coupled_rate_of_equal_rates_is_one() {
        let h = RateSequence::exponential(2.0).unwrap();
        let th = coupled_rate(&h, &h, 1.0, 1.0).unwrap();
        for n in 0..50 {
            assert_eq!(th.value(n).unwrap(), 1.0);
        }
        assert_eq!(th.kind(), RateKind::Tabulated);
    }

    #[test]
    fn coupled_rate_without_second_exponent() {
        let h = RateSequence::polynomial(1.0).unwrap();
        let k = RateSequence::exponential(3.0).unwrap();
        let th = coupled_rate(&h, &k, 1.5, 0.0).unwrap();
        for n in 0..20 {
            assert_eq!(th.log_value(n).unwrap(), 1.5 * h.log_value(n).unwrap());
        }
    }

    #[test]
    fn coupled_rate_mixed_kinds() {
        let h = RateSequence::exponential(std::f64::consts::E).unwrap();
        let k = RateSequence::polynomial(1.0).unwrap();
        let th = coupled_rate(&h, &k, 1.0, 2.0).unwrap();
        // e^2 / 9
        assert_relative_eq!(th.value(2).unwrap(), 0.821_006_233_214_516_7, max_relative = 1e-12);
    }

    #[test]
    fn coupled_rate_rejects_bad_exponents() {
        let h = RateSequence::one();
        assert!(coupled_rate(&h, &h, 0.0, 1.0).is_err());
        assert!(coupled_rate(&h, &h, 1.0, -1.0).is_err());
    }

    #[test]
    fn reciprocal_examples() {
        let one = RateSequence::one().reciprocal();
        assert_eq!(one.value(7).unwrap(), 1.0);
        let th = RateSequence::exponential(2f64.exp()).unwrap();
        let bh = th.reciprocal();
        for n in 0..30 {
            assert_eq!(bh.log_value(n).unwrap(), -th.log_value(n).unwrap());
            assert_relative_eq!(bh.value(n).unwrap(), (-2.0 * n as f64).exp(), max_relative = 1e-13);
        }
        let twice = bh.reciprocal();
        for n in 0..30 {
            assert_eq!(twice.log_value(n).unwrap().to_bits(), th.log_value(n).unwrap().to_bits());
        }
    }

    #[test]
    fn spec_round_trip() {
        let spec: RateSpec = serde_json::from_str(r#"{"kind":"exp","lambda":2}"#).unwrap();
        assert_eq!(spec.build().unwrap(), RateSequence::exponential(2.0).unwrap());
        let t: RateSpec = serde_json::from_str(r#"{"kind":"table","log_values":[0,1,2]}"#).unwrap();
        assert_eq!(t.build().unwrap().log_value(2).unwrap(), 2.0);
        let both: RateSpec = serde_json::from_str(r#"{"kind":"table","values":[1],"log_values":[0]}"#).unwrap();
        assert!(both.build().is_err());
        assert!(serde_json::from_str::<RateSpec>(r#"{"kind":"exp","lambda":2,"p":1}"#).is_err());
        let one = coupled_rate(&RateSequence::exponential(2.0).unwrap(), &RateSequence::exponential(2.0).unwrap(), 1.0, 1.0).unwrap();
        match RateSpec::describe(&one, 4).unwrap() {
            RateSpec::Table { values: Some(v), .. } => assert_eq!(v, vec![1.0; 4]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn long_window_stays_in_log_space() {
        let h = RateSequence::exponential(2.0).unwrap();
        let lr = h.log_ratio(0, 200).unwrap();
        assert_eq!(lr, -200.0 * 2f64.ln());
        assert_relative_eq!(lr.exp(), 2f64.powi(-200), max_relative = 1e-13);
        // the reciprocal of r_2000 underflows directly but not in log space
        assert!(h.reciprocal().log_value(2000).unwrap().is_finite());
    }

    #[test]
    fn tables_validate_inputs_and_bounds() {
        assert!(RateSequence::from_values(&[1.0, -2.0]).is_err());
        assert!(RateSequence::from_values(&[]).is_err());
        assert!(RateSequence::exponential(0.0).is_err());
        let t = RateSequence::from_values(&[1.0, 2.0, 4.0]).unwrap();
        assert_eq!(t.domain_len(), Some(3));
        assert!(t.require_defined_through(2).is_ok());
        assert!(matches!(t.require_defined_through(3), Err(Error::RateUndefined { .. })));
        assert!(t.value(3).is_err());
    }
}
