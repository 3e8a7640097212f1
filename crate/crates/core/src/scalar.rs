//! Floating-point scalar abstraction shared by every numeric routine.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar the library is generic over (`f32` or `f64`).
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Relative pivot threshold below which a QR column counts as collinear.
    const RANK_TOL: f64;

    /// Converts a literal; every finite `f64` is representable (with rounding).
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }

    #[inline]
    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("count fits in a float")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Residual sums of squares at or below `degenerate_rel() * ||y||^2` are
    /// treated as an exact (saturated) fit.
    #[inline]
    fn degenerate_rel() -> Self {
        Self::epsilon() * Self::of(1e-4)
    }
}

impl Scalar for f64 {
    const RANK_TOL: f64 = 1e-10;
}

impl Scalar for f32 {
    const RANK_TOL: f64 = 1e-5;
}
