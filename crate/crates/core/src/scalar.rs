//! Floating point abstraction shared by the math, network and agent layers.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar the simulator can run on: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Width tag written into checkpoints.
    const WIDTH: u8;

    /// Converts an `f64` literal or configuration value.
    fn lit(v: f64) -> Self;

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    const WIDTH: u8 = 4;

    #[inline]
    fn lit(v: f64) -> Self {
        v as f32
    }
}

impl Scalar for f64 {
    const WIDTH: u8 = 8;

    #[inline]
    fn lit(v: f64) -> Self {
        v
    }
}
