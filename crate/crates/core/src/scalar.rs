//! Scalar abstractions.
//!
//! Everything that needs transcendental functions is generic over [`Real`]
//! (implemented for `f32` and `f64`). The Gaussian variance recursion and the
//! squared density-ratio moment only need field operations, so they are also
//! available over [`ExactField`], which additionally covers [`BigRational`].

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Float, FromPrimitive, Num, Signed, ToPrimitive, Zero};

/// Floating-point scalar used by the numerical core.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Send
    + Sync
    + serde::Serialize
    + 'static
{
    /// Converts an `f64` literal. Panics only for values the type cannot
    /// represent at all, which never happens for f32/f64.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn two() -> Self {
        Self::one() + Self::one()
    }

    fn half() -> Self {
        Self::of(0.5)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Ordered field scalar; exact when instantiated with [`BigRational`].
pub trait ExactField: Clone + PartialOrd + Num + Debug {
    fn ratio(numer: i64, denom: i64) -> Self;

    fn approx(&self) -> f64;

    fn abs_value(&self) -> Self {
        if *self < Self::zero() {
            Self::zero() - self.clone()
        } else {
            self.clone()
        }
    }

    fn powu(&self, exp: usize) -> Self {
        let mut acc = Self::one();
        let mut base = self.clone();
        let mut e = exp;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base.clone();
            }
            e >>= 1;
            if e > 0 {
                base = base.clone() * base;
            }
        }
        acc
    }
}

impl ExactField for f64 {
    fn ratio(numer: i64, denom: i64) -> Self {
        numer as f64 / denom as f64
    }

    fn approx(&self) -> f64 {
        *self
    }
}

impl ExactField for f32 {
    fn ratio(numer: i64, denom: i64) -> Self {
        (numer as f64 / denom as f64) as f32
    }

    fn approx(&self) -> f64 {
        *self as f64
    }
}

impl ExactField for BigRational {
    fn ratio(numer: i64, denom: i64) -> Self {
        BigRational::new(BigInt::from(numer), BigInt::from(denom))
    }

    fn approx(&self) -> f64 {
        // Ratio of huge integers: scale by bit length to stay within f64 range.
        let n_bits = self.numer().bits() as i64;
        let d_bits = self.denom().bits() as i64;
        let shift = (n_bits - 1000).max(0).max(d_bits - 1000);
        if shift == 0 {
            return self.to_f64().unwrap_or(f64::NAN);
        }
        let n = self.numer() >> (shift as usize);
        let d = self.denom() >> (shift as usize);
        if d.is_zero() {
            return if self.is_negative() { f64::NEG_INFINITY } else { f64::INFINITY };
        }
        if n.is_zero() {
            return 0.0;
        }
        BigRational::new(n, d).to_f64().unwrap_or(f64::NAN)
    }
}

/// Euclidean inner product.
#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub fn norm2<T: Real>(a: &[T]) -> T {
    dot(a, a)
}

#[inline]
pub fn norm<T: Real>(a: &[T]) -> T {
    norm2(a).sqrt()
}

#[inline]
pub fn dist<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::One;

    #[test]
    fn rational_powu_and_approx() {
        let x = BigRational::ratio(3, 2);
        assert_eq!(x.powu(3), BigRational::ratio(27, 8));
        assert_eq!(x.powu(0), BigRational::one());
        assert!((x.powu(40).approx() - 1.5f64.powi(40)).abs() < 1e-3);
    }

    #[test]
    fn approx_survives_huge_denominators() {
        let big = BigRational::ratio(1, 3).powu(2000);
        let v = big.approx();
        assert_eq!(v, 0.0);
        let near_one = BigRational::new(
            BigInt::from(10).pow(1500) + BigInt::from(1),
            BigInt::from(10).pow(1500),
        );
        assert!((near_one.approx() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn norms() {
        assert_eq!(norm(&[3.0f64, 4.0]), 5.0);
        assert_eq!(dist(&[1.0f32, 1.0], &[4.0, 5.0]), 5.0);
    }
}
