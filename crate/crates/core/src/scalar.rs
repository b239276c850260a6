//! Scalar abstraction for the numeric kernels.
//!
//! Everything numeric in this crate is generic over [`Scalar`] so the same
//! kernels run at f32 or f64. The default (and the precision used by the CLI
//! and all on-disk formats) is f64.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, NumAssignOps, NumCast};

/// Floating-point scalar usable by the tensor, solver, and training kernels.
pub trait Scalar:
    Float + NumAssignOps + NumCast + Sum<Self> + Send + Sync + Display + Debug + 'static
{
    /// Lossless-enough conversion from f64 for constants and seeded samples.
    fn from_f64(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("f64 constant representable in scalar type")
    }

    /// Conversion from a count.
    fn from_usize(n: usize) -> Self {
        <Self as NumCast>::from(n).expect("usize representable in scalar type")
    }

    /// Widening conversion used by the statistics layer.
    fn as_f64(self) -> f64 {
        <f64 as NumCast>::from(self).expect("scalar convertible to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
