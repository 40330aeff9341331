//! Scalar abstraction shared by the linear-algebra modules.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real field usable by the solver and the determinant oracles: `f32` or `f64`.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync {}

impl<T> Real for T where T: RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync {}

/// Converts an `f64` literal into `T`.
#[inline]
pub(crate) fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable in scalar type")
}

#[inline]
pub(crate) fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Rescales an `f64` tolerance chosen for double precision to `T`'s precision.
///
/// Tolerances that are already loose enough for `T` pass through unchanged.
pub(crate) fn scaled_tol<T: Real>(tol_f64: f64) -> T {
    let eps = to_f64(T::default_epsilon());
    lit(tol_f64.max(tol_f64 * eps / f64::EPSILON).min(0.5))
}
