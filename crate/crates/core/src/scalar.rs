//! Floating-point abstraction shared by the numeric kernels.
//!
//! Controller signals, kinematics, Pareto machinery and the regressor are
//! written against [`Scalar`] so they run in `f32` or `f64`. The algorithm
//! drivers and the harness fix the scalar to `f64` through the aliases in the
//! crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// floating point: f32 or f64
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + Sum
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` literal into this scalar.
    #[inline]
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
