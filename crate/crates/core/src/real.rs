//! Scalar abstraction shared by the kernel and schedule layers.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Floating point scalar the numeric kernels are generic over (`f32` or `f64`).
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    /// Lossy conversion to `f64`, used for diagnostics and error payloads.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// A nonnegative quantity that may be unbounded.
///
/// Used where a limit is legitimately infinite (parallel sums with a vanishing
/// noise term, the SNR at `t = 0`, the step-size bound of a drift-free schedule).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extended<R> {
    Finite(R),
    Unbounded,
}

impl<R: Real> Extended<R> {
    pub fn finite(self) -> Option<R> {
        match self {
            Extended::Finite(v) => Some(v),
            Extended::Unbounded => None,
        }
    }

    pub fn is_unbounded(&self) -> bool {
        matches!(self, Extended::Unbounded)
    }

    /// Collapses to a float, mapping the sentinel to `+inf`.
    pub fn to_float(self) -> R {
        self.finite().unwrap_or_else(R::infinity)
    }

    /// Reciprocal with `1/0 = Unbounded` and `1/Unbounded = 0`.
    pub fn recip_of(x: R) -> Self {
        if x == R::zero() {
            Extended::Unbounded
        } else {
            Extended::Finite(x.recip())
        }
    }
}

impl<R: Real> From<R> for Extended<R> {
    fn from(v: R) -> Self {
        Extended::Finite(v)
    }
}
