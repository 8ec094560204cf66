//! Numerical verification toolkit for trichotomies and dichotomies of
//! discrete linear time-varying systems `x_{n+1} = A_n x_n`.
//!
//! The crate checks the defining envelope inequalities over a finite window
//! using restricted singular values, builds the two rescaled systems whose
//! dichotomies characterize a trichotomy, and runs the forward and reverse
//! constructions as checked transformations.

pub mod coupling;
pub mod error;
pub mod genlab;
pub mod linalg;
pub mod projections;
pub mod rates;
pub mod report;
pub mod spectral;
pub mod system;

pub use error::{Error, Result};
pub use projections::{DiProjectionFamily, ProjectionFamily, QuadProjectionFamily, TriProjectionFamily};
pub use rates::RateSequence;
pub use report::{CheckOutcome, Verdict};
pub use spectral::{BoundParams, VerificationReport};
pub use system::LtvSystem;
