//! Scalar abstraction for the numeric pipeline.
//!
//! Feature files store f32 on disk; analysis usually runs in f64. Everything
//! numeric in [`crate::fewshot`] and [`crate::hmm`] is generic over [`Real`]
//! so both widths share one implementation.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar: f32 or f64.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Display
    + Debug
    + Send
    + Sync
    + 'static
{
    /// Lossless-enough conversion from usize for counts and denominators.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + AddAssign
        + SubAssign
        + MulAssign
        + DivAssign
        + Sum
        + Display
        + Debug
        + Send
        + Sync
        + 'static
{
}

/// Dot product of two equal-length slices.
pub fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Euclidean norm.
pub fn norm<F: Real>(v: &[F]) -> F {
    dot(v, v).sqrt()
}

/// log(sum(exp(v))) with the usual max shift.
pub fn log_sum_exp<F: Real>(v: &[F]) -> F {
    let m = v.iter().cloned().fold(F::neg_infinity(), F::max);
    if m == F::neg_infinity() {
        return F::neg_infinity();
    }
    let s = v.iter().map(|&x| (x - m).exp()).sum::<F>();
    m + s.ln()
}
