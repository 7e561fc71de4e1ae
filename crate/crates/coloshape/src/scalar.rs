//! Floating-point scalar abstraction.
//!
//! All geometry, registration, learning, and simulation code is generic over
//! [`Real`]; the file formats and CLI instantiate it at `f64` (see the
//! aliases at the crate root).

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Scalar type for all numeric code: `f32` or `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + FromStr
    + Default
    + Send
    + Sync
    + 'static
{
    /// Shorthand for lossless-enough conversion from `f64` constants.
    fn from_f64_const(v: f64) -> Self {
        Self::from_f64(v).expect("f64 constant representable in scalar type")
    }
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + NumAssign
        + Sum
        + Debug
        + Display
        + FromStr
        + Default
        + Send
        + Sync
        + 'static
{
}
