//! Numeric field abstraction.
//!
//! Every algorithm in this crate is written once against [`Scalar`] and runs
//! either in binary floating point (`f64`) or in exact rational arithmetic
//! ([`BigRational`]). Tolerances are expressed through [`Scalar::tol`], which
//! collapses to zero in exact mode so that comparisons become strict.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, Signed, ToPrimitive, Zero};

/// Scalar field used for weights, masses and distances.
pub trait Scalar:
    Clone
    + Debug
    + Display
    + PartialOrd
    + Num
    + Signed
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Send
    + Sync
    + 'static
{
    /// `true` when arithmetic is exact (no rounding).
    const EXACT: bool;

    /// Absolute tolerance `eps` in float mode, zero in exact mode.
    fn tol(eps: f64) -> Self;

    /// Converts a finite float without rounding (exact mode keeps the binary value).
    fn from_f64(x: f64) -> Option<Self>;

    fn to_f64(&self) -> f64;

    /// Parses decimal (`"0.1"`, `"-2.5e-3"`) or fraction (`"3/7"`) text.
    ///
    /// In exact mode `"0.1"` is exactly one tenth.
    fn parse_text(s: &str) -> Option<Self>;

    fn from_usize(n: usize) -> Self;

    /// `2^k` for any integer `k`.
    fn pow2(k: i32) -> Self {
        let two = Self::one() + Self::one();
        let mut out = Self::one();
        for _ in 0..k.unsigned_abs() {
            out *= two.clone();
        }
        if k < 0 {
            Self::one() / out
        } else {
            out
        }
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
    const EXACT: bool = false;

    fn tol(eps: f64) -> Self {
        eps
    }

    fn from_f64(x: f64) -> Option<Self> {
        x.is_finite().then_some(x)
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn parse_text(s: &str) -> Option<Self> {
        let s = s.trim();
        if let Some((num, den)) = s.split_once('/') {
            let n = f64::from_str(num.trim()).ok()?;
            let d = f64::from_str(den.trim()).ok()?;
            let v = n / d;
            return v.is_finite().then_some(v);
        }
        f64::from_str(s).ok().filter(|v| v.is_finite())
    }

    fn from_usize(n: usize) -> Self {
        n as f64
    }
}

impl Scalar for BigRational {
    const EXACT: bool = true;

    fn tol(_eps: f64) -> Self {
        BigRational::zero()
    }

    fn from_f64(x: f64) -> Option<Self> {
        BigRational::from_float(x)
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn parse_text(s: &str) -> Option<Self> {
        let s = s.trim();
        if let Some((num, den)) = s.split_once('/') {
            let n = BigInt::from_str(num.trim()).ok()?;
            let d = BigInt::from_str(den.trim()).ok()?;
            if d.is_zero() {
                return None;
            }
            return Some(BigRational::new(n, d));
        }
        parse_decimal(s)
    }

    fn from_usize(n: usize) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }
}

/// Exact parse of `[+-]digits[.digits][(e|E)[+-]digits]`.
fn parse_decimal(s: &str) -> Option<BigRational> {
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (negative, mantissa) = match mantissa.as_bytes().first()? {
        b'-' => (true, &mantissa[1..]),
        b'+' => (false, &mantissa[1..]),
        _ => (false, mantissa),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part
        .bytes()
        .chain(frac_part.bytes())
        .all(|b| b.is_ascii_digit())
    {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let mut value = BigRational::from_integer(BigInt::from_str(&digits).ok()?);
    let scale = exponent - frac_part.len() as i32;
    let ten = BigRational::from_integer(BigInt::from(10));
    for _ in 0..scale.unsigned_abs() {
        if scale > 0 {
            value *= ten.clone();
        } else {
            value /= ten.clone();
        }
    }
    if negative {
        value = -value;
    }
    Some(value)
}

/// `true` iff `a > b` beyond tolerance `eps` (strict in exact mode).
pub(crate) fn definitely_greater<S: Scalar>(a: &S, b: &S, eps: f64) -> bool {
    a.clone() - b.clone() > S::tol(eps)
}

pub(crate) fn within<S: Scalar>(a: &S, b: &S, eps: f64) -> bool {
    (a.clone() - b.clone()).abs() <= S::tol(eps)
}
