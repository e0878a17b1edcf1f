//! Exact rationals.
//!
//! Values are kept in lowest terms with a positive denominator.  Numbers whose numerator and
//! denominator fit a machine word stay on the small path; everything else spills into `BigInt`.
//! The representation is canonical, so derived equality and hashing are exact.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Q(Repr);

#[derive(Clone, PartialEq, Eq, Hash)]
enum Repr {
    Small(i64, i64),
    Big(BigInt, BigInt),
}

fn gcd_u128(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

impl Q {
    pub fn zero() -> Q {
        Q(Repr::Small(0, 1))
    }

    pub fn one() -> Q {
        Q(Repr::Small(1, 1))
    }

    pub fn from_int(n: i64) -> Q {
        Q(Repr::Small(n, 1))
    }

    /// `n / d`.  Panics when `d` is zero.
    pub fn new(n: i64, d: i64) -> Q {
        Q::from_i128(n as i128, d as i128)
    }

    fn from_i128(n: i128, d: i128) -> Q {
        assert!(d != 0, "rational with zero denominator");
        if n == 0 {
            return Q::zero();
        }
        let g = gcd_u128(n.unsigned_abs(), d.unsigned_abs()) as i128;
        let (mut n, mut d) = (n / g, d / g);
        if d < 0 {
            n = -n;
            d = -d;
        }
        match (i64::try_from(n), i64::try_from(d)) {
            (Ok(n), Ok(d)) => Q(Repr::Small(n, d)),
            _ => Q(Repr::Big(BigInt::from(n), BigInt::from(d))),
        }
    }

    pub fn from_big(n: BigInt, d: BigInt) -> Q {
        assert!(!d.is_zero(), "rational with zero denominator");
        if n.is_zero() {
            return Q::zero();
        }
        let g = n.gcd(&d);
        let (mut n, mut d) = (n / &g, d / &g);
        if d.is_negative() {
            n = -n;
            d = -d;
        }
        match (n.to_i64(), d.to_i64()) {
            (Some(n), Some(d)) => Q(Repr::Small(n, d)),
            _ => Q(Repr::Big(n, d)),
        }
    }

    fn big_parts(&self) -> (BigInt, BigInt) {
        match &self.0 {
            Repr::Small(n, d) => (BigInt::from(*n), BigInt::from(*d)),
            Repr::Big(n, d) => (n.clone(), d.clone()),
        }
    }

    pub fn numer(&self) -> BigInt {
        self.big_parts().0
    }

    pub fn denom(&self) -> BigInt {
        self.big_parts().1
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.0, Repr::Small(0, _))
    }

    pub fn is_one(&self) -> bool {
        matches!(self.0, Repr::Small(1, 1))
    }

    pub fn is_positive(&self) -> bool {
        match &self.0 {
            Repr::Small(n, _) => *n > 0,
            Repr::Big(n, _) => n.is_positive(),
        }
    }

    pub fn is_negative(&self) -> bool {
        match &self.0 {
            Repr::Small(n, _) => *n < 0,
            Repr::Big(n, _) => n.is_negative(),
        }
    }

    pub fn is_integer(&self) -> bool {
        match &self.0 {
            Repr::Small(_, d) => *d == 1,
            Repr::Big(_, d) => d.is_one(),
        }
    }

    /// True when `0 < self < 1`.
    pub fn is_proper_probability(&self) -> bool {
        self.is_positive() && *self < Q::one()
    }

    pub fn abs(&self) -> Q {
        if self.is_negative() {
            -self
        } else {
            self.clone()
        }
    }

    pub fn recip(&self) -> Q {
        Q::one() / self
    }

    pub fn to_f64(&self) -> f64 {
        match &self.0 {
            Repr::Small(n, d) => *n as f64 / *d as f64,
            Repr::Big(n, d) => n.to_f64().unwrap_or(f64::NAN) / d.to_f64().unwrap_or(f64::NAN),
        }
    }

    pub fn min(a: &Q, b: &Q) -> Q {
        if a <= b {
            a.clone()
        } else {
            b.clone()
        }
    }

    pub fn max(a: &Q, b: &Q) -> Q {
        if a >= b {
            a.clone()
        } else {
            b.clone()
        }
    }
}

fn add_q(a: &Q, b: &Q) -> Q {
    match (&a.0, &b.0) {
        (Repr::Small(n1, d1), Repr::Small(n2, d2)) => {
            if d1 == d2 {
                Q::from_i128(*n1 as i128 + *n2 as i128, *d1 as i128)
            } else {
                Q::from_i128(*n1 as i128 * *d2 as i128 + *n2 as i128 * *d1 as i128, *d1 as i128 * *d2 as i128)
            }
        }
        _ => {
            let (n1, d1) = a.big_parts();
            let (n2, d2) = b.big_parts();
            Q::from_big(n1 * &d2 + n2 * &d1, d1 * d2)
        }
    }
}

fn mul_q(a: &Q, b: &Q) -> Q {
    match (&a.0, &b.0) {
        (Repr::Small(n1, d1), Repr::Small(n2, d2)) => {
            Q::from_i128(*n1 as i128 * *n2 as i128, *d1 as i128 * *d2 as i128)
        }
        _ => {
            let (n1, d1) = a.big_parts();
            let (n2, d2) = b.big_parts();
            Q::from_big(n1 * n2, d1 * d2)
        }
    }
}

fn neg_q(a: &Q) -> Q {
    match &a.0 {
        Repr::Small(n, d) => Q::from_i128(-(*n as i128), *d as i128),
        Repr::Big(n, d) => Q::from_big(-n.clone(), d.clone()),
    }
}

fn inv_q(a: &Q) -> Q {
    match &a.0 {
        Repr::Small(n, d) => Q::from_i128(*d as i128, *n as i128),
        Repr::Big(n, d) => Q::from_big(d.clone(), n.clone()),
    }
}

macro_rules! binop {
    ($tr:ident, $m:ident, $body:expr) => {
        impl $tr<&Q> for &Q {
            type Output = Q;
            fn $m(self, rhs: &Q) -> Q {
                $body(self, rhs)
            }
        }
        impl $tr<Q> for &Q {
            type Output = Q;
            fn $m(self, rhs: Q) -> Q {
                $body(self, &rhs)
            }
        }
        impl $tr<&Q> for Q {
            type Output = Q;
            fn $m(self, rhs: &Q) -> Q {
                $body(&self, rhs)
            }
        }
        impl $tr<Q> for Q {
            type Output = Q;
            fn $m(self, rhs: Q) -> Q {
                $body(&self, &rhs)
            }
        }
    };
}

binop!(Add, add, add_q);
binop!(Sub, sub, |a: &Q, b: &Q| add_q(a, &neg_q(b)));
binop!(Mul, mul, mul_q);
binop!(Div, div, |a: &Q, b: &Q| mul_q(a, &inv_q(b)));

impl Neg for Q {
    type Output = Q;
    fn neg(self) -> Q {
        neg_q(&self)
    }
}

impl Neg for &Q {
    type Output = Q;
    fn neg(self) -> Q {
        neg_q(self)
    }
}

impl AddAssign<&Q> for Q {
    fn add_assign(&mut self, rhs: &Q) {
        *self = add_q(self, rhs);
    }
}

impl AddAssign<Q> for Q {
    fn add_assign(&mut self, rhs: Q) {
        *self = add_q(self, &rhs);
    }
}

impl SubAssign<&Q> for Q {
    fn sub_assign(&mut self, rhs: &Q) {
        *self = add_q(self, &neg_q(rhs));
    }
}

impl MulAssign<&Q> for Q {
    fn mul_assign(&mut self, rhs: &Q) {
        *self = mul_q(self, rhs);
    }
}

impl Sum for Q {
    fn sum<I: Iterator<Item = Q>>(iter: I) -> Q {
        iter.fold(Q::zero(), |acc, x| acc + x)
    }
}

impl<'a> Sum<&'a Q> for Q {
    fn sum<I: Iterator<Item = &'a Q>>(iter: I) -> Q {
        iter.fold(Q::zero(), |acc, x| acc + x)
    }
}

impl Ord for Q {
    fn cmp(&self, other: &Q) -> Ordering {
        match (&self.0, &other.0) {
            (Repr::Small(n1, d1), Repr::Small(n2, d2)) => (*n1 as i128 * *d2 as i128).cmp(&(*n2 as i128 * *d1 as i128)),
            _ => {
                let (n1, d1) = self.big_parts();
                let (n2, d2) = other.big_parts();
                (n1 * d2).cmp(&(n2 * d1))
            }
        }
    }
}

impl PartialOrd for Q {
    fn partial_cmp(&self, other: &Q) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Default for Q {
    fn default() -> Q {
        Q::zero()
    }
}

impl Zero for Q {
    fn zero() -> Q {
        Q::zero()
    }
    fn is_zero(&self) -> bool {
        Q::is_zero(self)
    }
}

impl One for Q {
    fn one() -> Q {
        Q::one()
    }
}

impl From<i64> for Q {
    fn from(n: i64) -> Q {
        Q::from_int(n)
    }
}

impl fmt::Display for Q {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0 {
            Repr::Small(n, 1) => write!(f, "{n}"),
            Repr::Small(n, d) => write!(f, "{n}/{d}"),
            Repr::Big(n, d) if d.is_one() => write!(f, "{n}"),
            Repr::Big(n, d) => write!(f, "{n}/{d}"),
        }
    }
}

impl fmt::Debug for Q {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed rational literal `{0}`")]
pub struct ParseQError(pub String);

impl FromStr for Q {
    type Err = ParseQError;

    /// Accepts `n`, `n/d` and finite decimals such as `0.25`.
    fn from_str(s: &str) -> Result<Q, ParseQError> {
        let err = || ParseQError(s.to_string());
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let n: BigInt = n.trim().parse().map_err(|_| err())?;
            let d: BigInt = d.trim().parse().map_err(|_| err())?;
            if d.is_zero() {
                return Err(err());
            }
            return Ok(Q::from_big(n, d));
        }
        if let Some((int, frac)) = s.split_once('.') {
            if frac.is_empty() || !frac.chars().all(|c| c.is_ascii_digit()) {
                return Err(err());
            }
            let negative = int.starts_with('-');
            let int_digits = int.trim_start_matches(['-', '+']);
            if !int_digits.chars().all(|c| c.is_ascii_digit()) {
                return Err(err());
            }
            let whole: BigInt =
                if int_digits.is_empty() { BigInt::zero() } else { int_digits.parse().map_err(|_| err())? };
            let scale = BigInt::from(10u32).pow(frac.len() as u32);
            let frac: BigInt = frac.parse().map_err(|_| err())?;
            let mut n = whole * &scale + frac;
            if negative {
                n = -n;
            }
            return Ok(Q::from_big(n, scale));
        }
        let n: BigInt = s.parse().map_err(|_| err())?;
        Ok(Q::from_big(n, BigInt::one()))
    }
}

impl Serialize for Q {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Q {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Q, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_forms() {
        assert_eq!(Q::new(2, 4), Q::new(1, 2));
        assert_eq!(Q::new(1, -2), Q::new(-1, 2));
        assert_eq!(Q::new(0, 7), Q::zero());
        assert_eq!(Q::new(3, 4).to_string(), "3/4");
        assert_eq!(Q::from_int(5).to_string(), "5");
    }

    #[test]
    fn parse_literals() {
        assert_eq!("1/3".parse::<Q>().unwrap(), Q::new(1, 3));
        assert_eq!("0.25".parse::<Q>().unwrap(), Q::new(1, 4));
        assert_eq!(".5".parse::<Q>().unwrap(), Q::new(1, 2));
        assert_eq!("-1.5".parse::<Q>().unwrap(), Q::new(-3, 2));
        assert!("1/0".parse::<Q>().is_err());
        assert!("0.x".parse::<Q>().is_err());
    }

    #[test]
    fn overflow_spills_and_returns() {
        let big = Q::new(i64::MAX, 1) * Q::new(i64::MAX, 1);
        assert!(matches!(big.0, Repr::Big(..)));
        let back = &big / &Q::new(i64::MAX, 1);
        assert_eq!(back, Q::new(i64::MAX, 1));
        assert!(matches!(back.0, Repr::Small(..)));
        assert_eq!(-Q::new(i64::MIN, 1) - Q::one(), Q::new(i64::MAX, 1));
    }

    #[test]
    fn ordering_mixes_representations() {
        let big = Q::new(i64::MAX, 1) * Q::from_int(4);
        assert!(Q::new(1, 2) < big);
        assert!(-&big < Q::zero());
        assert_eq!(Q::new(1, 3).cmp(&Q::new(2, 6)), Ordering::Equal);
    }
}
