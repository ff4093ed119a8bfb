//! Scalar abstraction for the numeric core.
//!
//! Vectors, gradients, and model parameters are generic over [`Real`] so the
//! same code runs in `f32` or `f64`. Privacy arithmetic (budgets, noise
//! calibration) always happens in `f64` and is converted at the boundary.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, NumAssign, NumCast};

/// Floating-point scalar usable throughout the numeric core.
pub trait Real: Float + NumAssign + Sum + Debug + Display + Send + Sync + 'static {
    /// Lossy conversion from `f64` (exact for `f64`, rounded for `f32`).
    #[inline]
    fn from_f64(x: f64) -> Self {
        <Self as NumCast>::from(x).expect("f64 -> Real cast")
    }

    /// Widening conversion to `f64`.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real -> f64 cast")
    }
}

impl<T> Real for T where T: Float + NumAssign + Sum + Debug + Display + Send + Sync + 'static {}
