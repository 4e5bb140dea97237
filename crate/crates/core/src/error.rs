//! Error type shared by every module of the library.

use crate::forms::FormError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A computation would exceed the configured work budget. Carries the
    /// estimated cost so callers can report how far over budget the request is.
    #[error("work budget exceeded for {what}: needs about {needed}, cap is {cap}")]
    Budget {
        what: String,
        needed: u128,
        cap: u128,
    },

    #[error(transparent)]
    Form(#[from] FormError),

    #[error("{0} is not prime")]
    NotPrime(u64),

    #[error("(s, a_k, a_d) = ({s}, {a_k}, {a_d}) is not a coprime triple")]
    NotCoprime { s: u64, a_k: u64, a_d: u64 },

    #[error("point lies outside the required arc set: {0}")]
    OutsideArcs(String),

    #[error("no minor-arc sample found after {tries} draws (theta too aggressive for this X?)")]
    NoMinorSample { tries: u64 },

    #[error("numeric check failed in {what}: residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    NumericFault {
        what: String,
        residual: f64,
        tol: f64,
    },

    #[error("infeasible: {0}")]
    Infeasible(String),

    /// An internal cross-check that should hold by construction failed;
    /// always worth reporting, never worth absorbing.
    #[error("internal consistency check failed: {0}")]
    Inconsistent(String),

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArg { name: &'static str, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArg {
            name,
            reason: reason.into(),
        }
    }
}
