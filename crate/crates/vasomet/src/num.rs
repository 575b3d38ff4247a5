//! Scalar abstraction for the numeric core: f32 or f64.

use std::fmt::{Debug, Display};

/// Floating-point scalar the geometry and statistics routines are generic
/// over.
pub trait Real:
    num_traits::Float + num_traits::FromPrimitive + num_traits::NumCast + Debug + Display + 'static
{
    /// Shorthand for lossy conversion from f64 literals.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal convertible to Real")
    }
}

impl Real for f32 {}
impl Real for f64 {}
