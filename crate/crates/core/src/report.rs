//! Check outcomes shared by the validators.

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Location {
    pub step: usize,
    pub detail: String,
}

/// Result of one named clause: the worst residual seen and where.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub clause: String,
    pub pass: bool,
    #[serde(serialize_with = "serialize_extended_f64")]
    pub worst: f64,
    pub tol: f64,
    pub location: Option<Location>,
}

impl CheckOutcome {
    pub(crate) fn tracker(clause: &str, tol: f64) -> WorstTracker {
        WorstTracker {
            clause: clause.to_string(),
            tol,
            worst: 0.0,
            location: None,
            forced_fail: false,
        }
    }
}

/// Accumulates the maximum residual of a clause; NaN counts as a failure.
#[derive(Debug, Clone)]
pub(crate) struct WorstTracker {
    clause: String,
    tol: f64,
    worst: f64,
    location: Option<Location>,
    forced_fail: bool,
}

impl WorstTracker {
    pub(crate) fn observe(&mut self, value: f64, step: usize, detail: impl FnOnce() -> String) {
        if value.is_nan() {
            if !self.forced_fail {
                self.forced_fail = true;
                self.worst = f64::NAN;
                self.location = Some(Location { step, detail: detail() });
            }
            return;
        }
        if !self.forced_fail && value > self.worst {
            self.worst = value;
            self.location = Some(Location { step, detail: detail() });
        }
    }

    /// Record a failure that has no natural residual.
    pub(crate) fn fail(&mut self, step: usize, detail: impl FnOnce() -> String) {
        if !self.forced_fail {
            self.forced_fail = true;
            self.worst = f64::INFINITY;
            self.location = Some(Location { step, detail: detail() });
        }
    }

    pub(crate) fn finish(self) -> CheckOutcome {
        let pass = !self.forced_fail && self.worst <= self.tol;
        CheckOutcome {
            clause: self.clause,
            pass,
            worst: self.worst,
            tol: self.tol,
            location: if pass && self.worst == 0.0 { None } else { self.location },
        }
    }
}

/// A set of clause outcomes; passes iff every clause passes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub pass: bool,
    pub checks: Vec<CheckOutcome>,
}

impl Verdict {
    pub fn from_checks(checks: Vec<CheckOutcome>) -> Self {
        Self {
            pass: checks.iter().all(|c| c.pass),
            checks,
        }
    }

    pub fn clause(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.clause == name)
    }

    pub fn failing(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.clause.as_str())
            .collect()
    }
}

/// Serialize an `f64`, writing non-finite values as the strings `"inf"`,
/// `"-inf"` and `"nan"` instead of JSON `null`.
pub fn serialize_extended_f64<S: serde::Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if v.is_nan() {
        s.serialize_str("nan")
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}
