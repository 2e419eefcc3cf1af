//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display, LowerExp};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating-point scalar usable throughout the crate (`f32` or `f64`).
///
/// Combines nalgebra's `RealField` (decompositions, complex promotion) with
/// num-traits conversions so tolerances written as `f64` literals can be
/// lifted into the working precision.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Debug + Display + LowerExp + Send + Sync + 'static
{
    /// Lift an `f64` constant into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Lossy conversion for diagnostics and file output.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Machine epsilon of the working precision.
    #[inline]
    fn eps() -> Self {
        Self::default_epsilon()
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `|z|` for a complex number over any [`Real`].
#[inline]
pub fn modulus<T: Real>(z: nalgebra::Complex<T>) -> T {
    z.re.hypot(z.im)
}
