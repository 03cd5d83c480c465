//! Floating-point scalar abstraction shared by every kernel.

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point: f32 or f64.
///
/// Production runs use `f32` throughout; `f64` instantiations serve as
/// higher-precision references in tests.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Send + Sync + 'static
{
    /// Lossy conversion from an index or small integer count.
    #[inline(always)]
    fn of_usize(n: usize) -> Self {
        // Every Float accepts any usize (possibly rounded).
        Self::from_usize(n).unwrap_or_else(Self::nan)
    }

    #[inline(always)]
    fn of_f64(v: f64) -> Self {
        Self::from_f64(v).unwrap_or_else(Self::nan)
    }

    #[inline(always)]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
