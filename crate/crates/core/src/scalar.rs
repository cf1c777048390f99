use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar used by the exact kernels and the quadrature.
///
/// Implemented for `f32` and `f64`. Probabilities enter the kernels as `f64`
/// and are narrowed once through [`Real::from_f64_lossy`].
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("every finite f64 maps to a Real")
    }

    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("every usize maps to a Real")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("Real always converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}
