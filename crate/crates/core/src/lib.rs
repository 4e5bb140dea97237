//! Exact and numerical kernels for desk-scale circle-method experiments on a
//! pair of forms: a diagonal form of degree `k >= 3` together with a general
//! form of degree `k - 1` in the same variables.
//!
//! The crate is organized around a few hard rules:
//!
//! * Every quantity that can be held in the rationals is held in the
//!   rationals. Arc membership, arc volumes, and certificate margins are
//!   decided by exact comparisons, never by floating-point thresholds.
//! * Floating point appears only where a limit genuinely lives in `R`
//!   (exponential sums, oscillatory integrals), and there the summation
//!   order is fixed and compensated so runs are bit-for-bit reproducible
//!   at any thread count.
//! * Anything that can blow up carries an explicit work budget and fails
//!   with a typed error instead of stalling.

pub mod arcs;
pub mod arith;
pub mod budget;
pub mod certify;
pub mod count;
pub mod density;
pub mod error;
pub mod exact;
pub mod expsum;
pub mod forms;
pub mod kahan;
pub mod quadrature;

pub use budget::Budget;
pub use certify::ExponentCertificate;
pub use error::{Error, Result};
pub use exact::Rat;
pub use forms::{DifferencePoly, FormError, Monomial, SystemSpec};
