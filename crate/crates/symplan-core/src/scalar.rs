//! Floating-point scalar abstraction.
//!
//! Everything numeric in this crate is generic over [`Real`], so the same
//! pipeline runs in `f32` or `f64`. Feature files always store 32-bit values;
//! the default lane (see the aliases in the crate root) loads them into `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Scalar type the pipeline is generic over: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Convert from an `f64` constant or config value.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to Real")
    }

    /// Widen to `f64` for reporting and serialization headers.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }

    /// Narrow to the 32-bit storage format.
    fn as_f32(self) -> f32 {
        self.to_f32().expect("Real converts to f32")
    }

    /// Round through the 32-bit storage format, so in-memory values match
    /// what a save/load cycle would produce.
    fn through_f32(self) -> Self {
        Self::of(self.as_f32() as f64)
    }
}

impl Real for f32 {}
impl Real for f64 {}
