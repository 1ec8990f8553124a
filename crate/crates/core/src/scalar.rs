//! Scalar abstractions.
//!
//! Two layers are used throughout the crate:
//!
//! * [`Scalar`] is a plain IEEE floating point type (`f32`, `f64`) with the
//!   full `num_traits::Float` surface. Solvers that need comparisons, norms
//!   and pivoting are written against it.
//! * [`Real`] is the smaller arithmetic surface needed to *evaluate* library
//!   features, vector fields, stage predictors and network layers. Every
//!   [`Scalar`] is a [`Real`], and so is the reverse-mode [`Var`](crate::grad::Var),
//!   which lets the same evaluation code produce values or record gradients.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type usable by the numerical solvers.
pub trait Scalar:
    Float + FromPrimitive + AddAssign + SubAssign + MulAssign + Sum + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + AddAssign + SubAssign + MulAssign + Sum + Debug + Display + Send + Sync + 'static
{
}

/// Differentiable arithmetic: enough to evaluate features, fields and networks.
pub trait Real:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(v: f64) -> Self;
    /// Primal value as `f64`.
    fn value(self) -> f64;

    #[inline]
    fn zero() -> Self {
        Self::from_f64(0.0)
    }
    #[inline]
    fn one() -> Self {
        Self::from_f64(1.0)
    }

    fn powi(self, n: i32) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn tanh(self) -> Self;

    /// `self * k` for a constant `k`.
    #[inline]
    fn scale(self, k: f64) -> Self {
        self * Self::from_f64(k)
    }

    /// Inner product of two equally long slices.
    fn dot(a: &[Self], b: &[Self]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        let mut acc = Self::zero();
        for (&x, &y) in a.iter().zip(b) {
            acc = acc + x * y;
        }
        acc
    }

    /// `sum_i coeffs[i] * xs[i]` with constant coefficients.
    fn weighted_sum(coeffs: &[f64], xs: &[Self]) -> Self {
        debug_assert_eq!(coeffs.len(), xs.len());
        let mut acc = Self::zero();
        for (&k, &x) in coeffs.iter().zip(xs) {
            acc = acc + x.scale(k);
        }
        acc
    }

    /// Plain sum of a slice.
    fn sum(xs: &[Self]) -> Self {
        let mut acc = Self::zero();
        for &x in xs {
            acc = acc + x;
        }
        acc
    }
}

impl<T: Scalar> Real for T {
    #[inline]
    fn from_f64(v: f64) -> Self {
        T::lit(v)
    }
    #[inline]
    fn value(self) -> f64 {
        self.as_f64()
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        Float::powi(self, n)
    }
    #[inline]
    fn sin(self) -> Self {
        Float::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        Float::cos(self)
    }
    #[inline]
    fn exp(self) -> Self {
        Float::exp(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        Float::tanh(self)
    }
    #[inline]
    fn scale(self, k: f64) -> Self {
        self * T::lit(k)
    }
}

/// Converts a slice between scalar types.
pub fn cast_slice<A: Real, B: Real>(xs: &[A]) -> Vec<B> {
    xs.iter().map(|&x| B::from_f64(x.value())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly<T: Real>(x: T) -> T {
        x.powi(3) - x.scale(2.0) + T::one()
    }

    #[test]
    fn generic_evaluation_agrees_across_precisions() {
        let a: f64 = poly(1.5f64);
        let b: f32 = poly(1.5f32);
        assert!((a - 1.375).abs() < 1e-15);
        assert!((b as f64 - a).abs() < 1e-6);
    }

    #[test]
    fn fused_helpers_match_loops() {
        let a = [1.0, 2.0, 3.0];
        let b = [4.0, -5.0, 6.0];
        assert_eq!(<f64 as Real>::dot(&a, &b), 12.0);
        assert_eq!(<f64 as Real>::weighted_sum(&[0.5, 0.5, 1.0], &b), 5.5);
        assert_eq!(<f64 as Real>::sum(&a), 6.0);
    }
}
