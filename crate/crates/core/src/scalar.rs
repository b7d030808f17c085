//! Number types the assignment and simplex solvers are generic over.
//!
//! `f64` compares with an absolute tolerance of `1e-9`; [`Rational`] compares
//! exactly, so certificates built from it carry no rounding slack.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive, Zero};

pub type Rational = BigRational;

pub trait Scalar: Clone + Debug + PartialOrd + Num + Signed + FromPrimitive + ToPrimitive + Send + Sync {
    /// Absolute comparison slack. Zero for exact types.
    fn tolerance() -> Self;

    fn is_exact() -> bool;

    fn from_rational(r: &Rational) -> Self;

    fn to_rational(&self) -> Rational;

    fn from_f64_exact(x: f64) -> Self {
        Self::from_f64(x).expect("finite value")
    }

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `self > other + tol`
    fn gt_tol(&self, other: &Self) -> bool {
        self.clone() > other.clone() + Self::tolerance()
    }

    fn is_positive_tol(&self) -> bool {
        self.gt_tol(&Self::zero())
    }

    fn approx_eq(&self, other: &Self) -> bool {
        (self.clone() - other.clone()).abs() <= Self::tolerance()
    }

    fn max_of(a: Self, b: Self) -> Self {
        if b > a {
            b
        } else {
            a
        }
    }

    fn min_of(a: Self, b: Self) -> Self {
        if b < a {
            b
        } else {
            a
        }
    }
}

impl Scalar for f64 {
    fn tolerance() -> Self {
        1e-9
    }

    fn is_exact() -> bool {
        false
    }

    fn from_rational(r: &Rational) -> Self {
        r.to_f64().unwrap_or(f64::NAN)
    }

    fn to_rational(&self) -> Rational {
        BigRational::from_f64(*self).expect("finite value")
    }
}

impl Scalar for BigRational {
    fn tolerance() -> Self {
        BigRational::zero()
    }

    fn is_exact() -> bool {
        true
    }

    fn from_rational(r: &Rational) -> Self {
        r.clone()
    }

    fn to_rational(&self) -> Rational {
        self.clone()
    }
}

/// Parses `"3"`, `"-2/7"` or a decimal such as `"0.125"` into an exact rational.
pub fn parse_rational(text: &str) -> Option<Rational> {
    let text = text.trim();
    if let Some((num, den)) = text.split_once('/') {
        let num: BigInt = num.trim().parse().ok()?;
        let den: BigInt = den.trim().parse().ok()?;
        if den.is_zero() {
            return None;
        }
        return Some(BigRational::new(num, den));
    }
    if let Some((int, frac)) = text.split_once('.') {
        let negative = int.starts_with('-');
        let digits = format!("{}{}", int.trim_start_matches('-'), frac);
        let num: BigInt = digits.parse().ok()?;
        let den = BigInt::from(10u32).pow(frac.len() as u32);
        let value = BigRational::new(num, den);
        return Some(if negative { -value } else { value });
    }
    text.parse::<BigInt>().ok().map(BigRational::from_integer)
}

pub fn rational(num: i64, den: i64) -> Rational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}
