//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display, LowerExp};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rustfft::FftNum;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point scalar: `f32` or `f64`.
///
/// Physical constants are stored as `f64` and converted with [`Real::lit`].
/// Single precision works for the transforms and fits but loses phase accuracy
/// on long records, so the pipeline itself runs in `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + FftNum
    + Default
    + Debug
    + Display
    + LowerExp
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Trapezoid rule on a uniform grid.
pub fn trapezoid<T: Real>(values: &[T], step: T) -> T {
    match values.len() {
        0 | 1 => T::zero(),
        n => {
            let inner = values[1..n - 1].iter().fold(T::zero(), |acc, &v| acc + v);
            step * (inner + (values[0] + values[n - 1]) * T::lit(0.5))
        }
    }
}

pub(crate) fn mean<T: Real>(values: &[T]) -> T {
    if values.is_empty() {
        return T::zero();
    }
    values.iter().fold(T::zero(), |acc, &v| acc + v) / T::from_usize_lossy(values.len())
}

/// Unbiased sample variance.
pub(crate) fn variance<T: Real>(values: &[T]) -> T {
    if values.len() < 2 {
        return T::zero();
    }
    let m = mean(values);
    let ss = values.iter().fold(T::zero(), |acc, &v| acc + (v - m) * (v - m));
    ss / T::from_usize_lossy(values.len() - 1)
}
