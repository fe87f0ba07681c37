//! Scalar abstraction shared by every numerical routine in the crate.

use nalgebra::RealField;
use num_complex::Complex;
use num_traits::{FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display, LowerExp};

/// Real floating-point scalar the solvers are generic over.
///
/// Implemented for `f32` and `f64`. Tolerances throughout the crate are
/// stated for `f64`; the `f32` instantiation is useful for quick previews
/// of small systems.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Default + Debug + Display + LowerExp + Send + Sync + 'static
{
    /// Unit roundoff of the type.
    fn machine_eps() -> Self;

    /// Smallest positive normal value.
    fn min_positive() -> Self;

    /// Converts an `f64` literal. Never fails for finite inputs.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize fits in a float")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {
    #[inline]
    fn machine_eps() -> Self {
        f32::EPSILON
    }

    #[inline]
    fn min_positive() -> Self {
        f32::MIN_POSITIVE
    }
}

impl Real for f64 {
    #[inline]
    fn machine_eps() -> Self {
        f64::EPSILON
    }

    #[inline]
    fn min_positive() -> Self {
        f64::MIN_POSITIVE
    }
}

/// Complex counterpart of a [`Real`] scalar.
pub type Cplx<T> = Complex<T>;

#[inline]
pub(crate) fn cplx<T: Real>(re: T, im: T) -> Cplx<T> {
    Complex::new(re, im)
}
