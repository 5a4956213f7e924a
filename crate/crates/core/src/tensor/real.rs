//! Scalar abstraction: training runs in f32, gradient checking in f64.

use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar usable by the tape. `f32` for training, `f64` for
/// finite-difference gradient checks.
pub trait Real:
    num_traits::Float + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Checkpoint dtype code (0 = f32). f64 states are never serialized.
    const DTYPE_CODE: u8;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn erf(self) -> Self;
}

impl Real for f32 {
    const DTYPE_CODE: u8 = 0;

    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn erf(self) -> Self {
        libm::erff(self)
    }
}

impl Real for f64 {
    const DTYPE_CODE: u8 = 1;

    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn erf(self) -> Self {
        libm::erf(self)
    }
}
