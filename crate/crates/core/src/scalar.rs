//! Scalar abstraction: the numeric kernels are generic over f32/f64.

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar accepted by the matrix and network kernels.
pub trait Scalar:
    'static
    + Copy
    + Send
    + Sync
    + std::fmt::Debug
    + std::fmt::Display
    + Float
    + NumAssign
    + FromPrimitive
    + ToPrimitive
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts an f64 constant or config value into `T`.
#[inline]
pub fn scalar<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("f64 value must convert to scalar type")
}
