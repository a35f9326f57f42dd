//! Scalar abstraction: everything numeric in this crate is generic over a
//! real field so the solver runs in `f32` or `f64` (tests and the CLI use
//! `f64`).

use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar the solver is generic over.
pub trait Real: nalgebra::RealField + FromPrimitive + ToPrimitive + Copy {}

impl Real for f32 {}
impl Real for f64 {}

/// Lossy conversion from `f64` literals into the working scalar.
pub fn conv<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("finite f64 converts into any Real scalar")
}

/// Conversion back to `f64` for reporting.
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().expect("Real scalar converts to f64")
}
