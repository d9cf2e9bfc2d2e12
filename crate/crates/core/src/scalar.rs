//! Scalar abstraction shared by every numeric module.
//!
//! All vehicle, flow and controller math is written against [`Real`], which
//! is implemented for `f32` and `f64`. Constants are lifted from `f64`
//! literals with [`cast`].

use nalgebra::RealField;
use num_traits::{FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar usable by the simulator: `f32` or `f64`.
pub trait Real:
    RealField + Copy + FloatConst + FromPrimitive + ToPrimitive + Default + std::iter::Sum
{
}

impl<T> Real for T where
    T: RealField + Copy + FloatConst + FromPrimitive + ToPrimitive + Default + std::iter::Sum
{
}

/// Converts an `f64` literal into the working scalar.
#[inline]
pub fn cast<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable in scalar type")
}

/// Converts a working scalar back to `f64` for logging and export.
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Sign function with `sign(0) = 0`.
#[inline]
pub fn sign<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle<T: Real>(a: T) -> T {
    let two_pi = T::two_pi();
    let mut w = a % two_pi;
    if w > T::pi() {
        w -= two_pi;
    } else if w <= -T::pi() {
        w += two_pi;
    }
    w
}

/// Symmetric clamp to `[-limit, limit]`.
#[inline]
pub fn clamp_abs<T: Real>(x: T, limit: T) -> T {
    x.clamp(-limit, limit)
}
