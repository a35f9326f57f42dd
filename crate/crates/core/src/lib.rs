//! Center manifolds of discrete dynamical systems by conjugacy: given
//! `F = A + g` with a spectral gap around the unit circle, solve
//! `F . K = K . R` for a parameterization `K` of the center manifold and
//! the conjugate center dynamics `R`, order by order and as the fixed point
//! of a contraction on triples `(r, k_u, k_s)`, then certify approximate
//! solutions with an explicit a-posteriori error bound.
//!
//! The crate is generic over the working scalar (`f32` or `f64`) through
//! [`real::Real`]; the aliases below fix `f64`, which is what the CLI and
//! the test suites use.

pub mod aposteriori;
pub mod constants;
pub mod error;
pub mod funcspace;
pub mod io;
pub mod linmodel;
pub mod real;
pub mod taylor;
pub mod theta;
pub mod verify;

pub use error::{Error, Result};
pub use real::Real;

/// `f64` aliases for the main pipeline types.
pub type Problem64 = linmodel::ProblemInstance<f64>;
pub type Ledger64 = constants::ConstantsLedger<f64>;
pub type Map64 = funcspace::SmoothMapRep<f64>;
pub type Triple64 = theta::ConjugacyTriple<f64>;
pub type Report64 = aposteriori::DefectReport<f64>;
