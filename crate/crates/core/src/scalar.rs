//! Scalar abstraction for the low-level numerical kernels.

use num_traits::{Float, FromPrimitive};
use std::fmt::Debug;

/// Real floating-point type accepted by the quadrature and polynomial kernels.
pub trait Scalar: Float + FromPrimitive + Debug + Send + Sync + 'static {
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable")
    }

    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("integer representable")
    }
}

impl<T> Scalar for T where T: Float + FromPrimitive + Debug + Send + Sync + 'static {}
