//! Scalar abstraction so the numeric core runs in either f32 or f64.
//!
//! Training uses f32 for speed; gradient checking and geometry oracles use f64.
//! Random streams are always drawn in f64 and converted, so a fixed seed yields
//! the same underlying numbers in both precisions.

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Floating-point scalar usable throughout the tensor and model code.
pub trait Scalar:
    Float
    + NumAssignOps
    + FromPrimitive
    + ToPrimitive
    + std::iter::Sum
    + std::fmt::Debug
    + std::fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Convert from f64, rounding to the nearest representable value.
    fn from_f64_lossy(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("finite f64 must convert")
    }

    /// Widen to f64.
    fn to_f64_lossy(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).expect("scalar must widen to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
