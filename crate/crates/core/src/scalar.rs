//! Floating-point scalar abstraction shared by every numeric routine.
//!
//! Estimators, decompositions and correlation statistics are written once
//! against [`Scalar`] and instantiated for `f64` (the default used by the
//! panel and CLI layers) or `f32`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::Serialize;

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + Serialize
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Tolerance used for rank and convergence decisions.
    fn rank_tolerance() -> Self {
        Self::epsilon() * Self::lit(1e3)
    }
}

impl Scalar for f64 {}

impl Scalar for f32 {}
