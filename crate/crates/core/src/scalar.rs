//! Numeric traits the generic parts of the crate are written against.
//!
//! Probabilities only need field arithmetic and ordering, so exact evaluation
//! works over rationals as well as floats. Geometry and sampling statistics
//! need square roots and trigonometry and are restricted to [`Real`].

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{Float, Num, ToPrimitive};

/// A value usable as a success probability or multiplier.
pub trait Probability: Num + Clone + PartialOrd + Debug + Send + Sync + 'static {
    /// Lossless for integers, nearest representable for floats, exact for
    /// rationals whenever `value` is finite.
    fn from_float(value: f64) -> Option<Self>;

    fn from_count(count: usize) -> Self;

    fn as_f64(&self) -> f64;

    fn pow_count(&self, exp: usize) -> Self {
        let mut out = Self::one();
        for _ in 0..exp {
            out = out * self.clone();
        }
        out
    }
}

impl Probability for f64 {
    fn from_float(value: f64) -> Option<Self> {
        Some(value)
    }
    fn from_count(count: usize) -> Self {
        count as f64
    }
    fn as_f64(&self) -> f64 {
        *self
    }
    fn pow_count(&self, exp: usize) -> Self {
        f64::powi(*self, exp as i32)
    }
}

impl Probability for f32 {
    fn from_float(value: f64) -> Option<Self> {
        Some(value as f32)
    }
    fn from_count(count: usize) -> Self {
        count as f32
    }
    fn as_f64(&self) -> f64 {
        f64::from(*self)
    }
    fn pow_count(&self, exp: usize) -> Self {
        f32::powi(*self, exp as i32)
    }
}

impl Probability for BigRational {
    fn from_float(value: f64) -> Option<Self> {
        Ratio::from_float(value)
    }
    fn from_count(count: usize) -> Self {
        Ratio::from_integer(BigInt::from(count))
    }
    fn as_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

/// Floating-point scalar: `f32` or `f64`.
pub trait Real: Float + Probability {}

impl Real for f32 {}
impl Real for f64 {}
