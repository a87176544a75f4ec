//! Exact rational helpers: parsing, canonical formatting, and exact powers of
//! distances.
//!
//! Distances are carried through their squares so Euclidean values stay exact
//! until a power actually needs a square root.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Rational = BigRational;

/// Width of the enclosure used when a power cannot be evaluated exactly.
pub const ENCLOSURE_PRECISION: f64 = 1e-12;

pub fn ratio(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Parses `"p/q"`, `"p"`, or a finite decimal such as `"-1.25"`.
pub fn parse_rational(text: &str) -> Result<Rational> {
    let s = text.trim();
    let bad = || Error::Parse(text.to_string());
    if s.is_empty() {
        return Err(bad());
    }
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(Rational::new(n, d));
    }
    let (negative, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (whole, frac) = body.split_once('.').unwrap_or((body, ""));
    if whole.is_empty() && frac.is_empty() {
        return Err(bad());
    }
    if !whole.chars().all(|c| c.is_ascii_digit()) || !frac.chars().all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let digits = format!("{}{}", if whole.is_empty() { "0" } else { whole }, frac);
    let num: BigInt = digits.parse().map_err(|_| bad())?;
    let den = num_traits::pow(BigInt::from(10), frac.len());
    let value = Rational::new(num, den);
    Ok(if negative { -value } else { value })
}

/// Canonical text form, always `num/den` with the denominator positive.
pub fn format_rational(value: &Rational) -> String {
    format!("{}/{}", value.numer(), value.denom())
}

pub fn lcm_u64(a: u64, b: u64) -> u64 {
    a.lcm(&b)
}

/// Denominator of a reduced rational as `u64`, if it fits.
pub fn denominator_u64(value: &Rational) -> Option<u64> {
    value.denom().to_u64()
}

pub fn abs_diff(a: &Rational, b: &Rational) -> Rational {
    (a - b).abs()
}

fn perfect_sqrt(n: &BigInt) -> Option<BigInt> {
    if n.is_negative() {
        return None;
    }
    let r = n.sqrt();
    (&r * &r == *n).then_some(r)
}

/// Exact square root of a rational when both parts are perfect squares.
pub fn exact_sqrt(value: &Rational) -> Option<Rational> {
    let n = perfect_sqrt(value.numer())?;
    let d = perfect_sqrt(value.denom())?;
    Some(Rational::new(n, d))
}

/// A transport exponent `p >= 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Exponent(Rational);

impl Exponent {
    pub fn new(p: Rational) -> Result<Self> {
        if p < Rational::one() {
            return Err(Error::InvalidArgument(format!("exponent must be at least 1, got {}", format_rational(&p))));
        }
        Ok(Exponent(p))
    }

    pub fn integer(p: u32) -> Self {
        Exponent::new(int(p as i64)).expect("integer exponent below 1")
    }

    pub fn value(&self) -> &Rational {
        &self.0
    }

    pub fn as_integer(&self) -> Option<u32> {
        if self.0.is_integer() {
            self.0.to_integer().to_u32()
        } else {
            None
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}", format_rational(&self.0))
        }
    }
}

/// A nonnegative distance, stored as its square.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Distance {
    squared: Rational,
}

impl Distance {
    pub fn zero() -> Self {
        Distance { squared: Rational::zero() }
    }

    pub fn from_value(d: &Rational) -> Self {
        Distance { squared: d * d }
    }

    pub fn from_squared(squared: Rational) -> Self {
        debug_assert!(!squared.is_negative());
        Distance { squared }
    }

    pub fn squared(&self) -> &Rational {
        &self.squared
    }

    /// The distance itself, when it is rational.
    pub fn exact(&self) -> Option<Rational> {
        exact_sqrt(&self.squared)
    }

    /// `self^p`, exact whenever the arithmetic allows it.
    pub fn pow(&self, p: &Exponent) -> PowValue {
        if self.squared.is_zero() {
            return PowValue::Exact(Rational::zero());
        }
        if self.squared.is_one() {
            return PowValue::Exact(Rational::one());
        }
        if let Some(k) = p.as_integer() {
            if k % 2 == 0 {
                return PowValue::Exact(num_traits::pow(self.squared.clone(), (k / 2) as usize));
            }
            if let Some(root) = self.exact() {
                return PowValue::Exact(num_traits::pow(root, k as usize));
            }
        }
        let base = self.squared.to_f64().unwrap_or(f64::INFINITY);
        let exp = p.value().to_f64().unwrap_or(f64::INFINITY) / 2.0;
        PowValue::enclose(base.powf(exp))
    }
}

/// Either an exact rational or a rational enclosure of width about
/// [`ENCLOSURE_PRECISION`] relative to the value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PowValue {
    Exact(Rational),
    Enclosure { lo: Rational, hi: Rational },
}

impl PowValue {
    fn enclose(value: f64) -> Self {
        let center = Rational::from_float(value).unwrap_or_else(Rational::zero);
        let eps = Rational::from_float(ENCLOSURE_PRECISION).unwrap();
        let slack = &center * &eps + &eps * &eps;
        PowValue::Enclosure { lo: &center - &slack, hi: &center + &slack }
    }

    pub fn exact(&self) -> Option<&Rational> {
        match self {
            PowValue::Exact(v) => Some(v),
            PowValue::Enclosure { .. } => None,
        }
    }

    pub fn into_exact(self, what: &str) -> Result<Rational> {
        match self {
            PowValue::Exact(v) => Ok(v),
            PowValue::Enclosure { .. } => Err(Error::InexactMetric(what.to_string())),
        }
    }

    pub fn bounds(&self) -> (Rational, Rational) {
        match self {
            PowValue::Exact(v) => (v.clone(), v.clone()),
            PowValue::Enclosure { lo, hi } => (lo.clone(), hi.clone()),
        }
    }

    pub fn add(&self, other: &PowValue) -> PowValue {
        match (self, other) {
            (PowValue::Exact(a), PowValue::Exact(b)) => PowValue::Exact(a + b),
            _ => {
                let (a_lo, a_hi) = self.bounds();
                let (b_lo, b_hi) = other.bounds();
                PowValue::Enclosure { lo: a_lo + b_lo, hi: a_hi + b_hi }
            }
        }
    }

    /// Ordering, refusing to guess when the enclosures overlap.
    pub fn try_cmp(&self, other: &PowValue) -> Result<Ordering> {
        let (a_lo, a_hi) = self.bounds();
        let (b_lo, b_hi) = other.bounds();
        if let (PowValue::Exact(a), PowValue::Exact(b)) = (self, other) {
            return Ok(a.cmp(b));
        }
        if a_hi < b_lo {
            Ok(Ordering::Less)
        } else if b_hi < a_lo {
            Ok(Ordering::Greater)
        } else {
            Err(Error::InexactMetric("comparison falls inside the enclosure band".to_string()))
        }
    }
}

impl fmt::Display for PowValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PowValue::Exact(v) => f.write_str(&format_rational(v)),
            PowValue::Enclosure { lo, hi } => {
                write!(f, "[{}, {}]", format_rational(lo), format_rational(hi))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fractions_and_decimals() {
        assert_eq!(parse_rational("1/4").unwrap(), ratio(1, 4));
        assert_eq!(parse_rational("2/8").unwrap(), ratio(1, 4));
        assert_eq!(parse_rational("-1.5").unwrap(), ratio(-3, 2));
        assert_eq!(parse_rational("0.125").unwrap(), ratio(1, 8));
        assert_eq!(parse_rational("7").unwrap(), int(7));
        assert_eq!(parse_rational(".5").unwrap(), ratio(1, 2));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
        assert!(parse_rational("1e3").is_err());
        assert!(parse_rational("").is_err());
    }

    #[test]
    fn canonical_format_keeps_denominator() {
        assert_eq!(format_rational(&int(3)), "3/1");
        assert_eq!(format_rational(&ratio(-2, 4)), "-1/2");
        assert_eq!(format_rational(&Rational::zero()), "0/1");
    }

    #[test]
    fn euclidean_powers_stay_exact_when_possible() {
        // 3-4-5 triangle
        let d = Distance::from_squared(int(25));
        assert_eq!(d.pow(&Exponent::integer(1)), PowValue::Exact(int(5)));
        let d = Distance::from_squared(int(2));
        assert_eq!(d.pow(&Exponent::integer(2)), PowValue::Exact(int(2)));
        assert!(d.pow(&Exponent::integer(1)).exact().is_none());
        let (lo, hi) = d.pow(&Exponent::integer(1)).bounds();
        assert!(lo < ratio(14143, 10000) && hi > ratio(14142, 10000));
    }

    #[test]
    fn overlapping_enclosures_refuse_to_compare() {
        let a = Distance::from_squared(int(2)).pow(&Exponent::integer(1));
        let b = a.clone();
        assert!(a.try_cmp(&b).is_err());
        let c = PowValue::Exact(int(2));
        assert_eq!(a.try_cmp(&c).unwrap(), Ordering::Less);
    }

    #[test]
    fn exponent_below_one_is_rejected() {
        assert!(Exponent::new(ratio(1, 2)).is_err());
        assert_eq!(Exponent::new(ratio(3, 2)).unwrap().as_integer(), None);
    }
}
