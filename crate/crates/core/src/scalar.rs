use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real floating-point scalar the dense linear algebra is written against.
///
/// Implemented for `f32` and `f64`. Tolerances that are stated for 64-bit
/// inputs are widened to a few ulps of the type's own epsilon for `f32`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal, panicking only if the type cannot hold it
    /// (never the case for `f32`/`f64`).
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Relative convergence threshold for the Jacobi iterations.
    ///
    /// 1e-12 for `f64`; types without that much precision fall back to
    /// eight machine epsilons.
    #[inline]
    fn convergence_tol() -> Self {
        let fixed = Self::lit(1e-12);
        let floor = Self::epsilon() * Self::lit(8.0);
        if floor > fixed {
            floor
        } else {
            fixed
        }
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}
