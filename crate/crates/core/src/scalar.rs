//! Scalar abstraction shared by the numerical kernels.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point type the simulation, estimators and metrics are generic over.
///
/// Implemented for `f32` and `f64`. Everything that touches files or
/// distribution functions works in `f64`.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + std::fmt::Debug {
    /// Machine epsilon of the type.
    fn eps() -> Self {
        Self::default_epsilon()
    }
}

impl<T> Real for T where T: RealField + Copy + FromPrimitive + ToPrimitive + std::fmt::Debug {}

/// Converts an `f64` constant into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    nalgebra::convert::<f64, T>(x)
}

/// Converts a count into `T`.
#[inline]
pub fn count<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("count representable in scalar type")
}

/// Lossy conversion to `f64` for reporting.
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}
