//! Scalar abstraction. The numeric core is generic over a floating-point
//! type implementing [`Real`]; `f32` and `f64` both qualify. Samplers and
//! reductions always run in `f64` internally so that random streams and
//! summation behaviour do not depend on the scalar choice.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar used throughout the crate.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
    /// Narrowing conversion from `f64` (sampler and reduction output).
    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("f64 -> scalar conversion")
    }

    /// Widening conversion to `f64` for reductions and reporting.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar -> f64 conversion")
    }
}

impl<T> Real for T where
    T: Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
}
