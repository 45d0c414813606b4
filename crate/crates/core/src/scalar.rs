//! Scalar abstraction shared by the exact and floating-point code paths.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive, Zero};

/// Field element usable by the algebra and group layers.
///
/// Implemented for arbitrary-precision rationals, `Ratio<i64>`, `f64` and `f32`.
pub trait Scalar:
    Clone + Debug + PartialEq + PartialOrd + Num + Signed + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// Whether the value should be treated as zero during elimination.
    fn is_negligible(&self) -> bool {
        self.is_zero()
    }

    fn from_ratio(numer: i64, denom: i64) -> Self {
        Self::from_i64(numer).expect("representable numerator")
            / Self::from_i64(denom).expect("representable denominator")
    }

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

/// Scalars with exact arithmetic, where integrality is decidable.
pub trait ExactScalar: Scalar {
    /// The value as an integer, if it is one and fits.
    fn to_integer(&self) -> Option<i64>;
    fn from_rational(q: &BigRational) -> Option<Self>;
    fn to_rational(&self) -> BigRational;
}

impl Scalar for BigRational {}

impl ExactScalar for BigRational {
    fn to_integer(&self) -> Option<i64> {
        if self.is_integer() {
            self.to_integer_value().to_i64()
        } else {
            None
        }
    }

    fn from_rational(q: &BigRational) -> Option<Self> {
        Some(q.clone())
    }

    fn to_rational(&self) -> BigRational {
        self.clone()
    }
}

trait IntegerValue {
    fn to_integer_value(&self) -> BigInt;
}

impl IntegerValue for BigRational {
    fn to_integer_value(&self) -> BigInt {
        self.numer() / self.denom()
    }
}

impl Scalar for Ratio<i64> {}

impl ExactScalar for Ratio<i64> {
    fn to_integer(&self) -> Option<i64> {
        self.is_integer().then(|| *self.numer())
    }

    fn from_rational(q: &BigRational) -> Option<Self> {
        Some(Ratio::new(q.numer().to_i64()?, q.denom().to_i64()?))
    }

    fn to_rational(&self) -> BigRational {
        BigRational::new(BigInt::from(*self.numer()), BigInt::from(*self.denom()))
    }
}

impl Scalar for f64 {
    fn is_negligible(&self) -> bool {
        self.abs() < 1e-12
    }
}

impl Scalar for f32 {
    fn is_negligible(&self) -> bool {
        self.abs() < 1e-6
    }
}

/// Parses `"p/q"`, `"p"` or a decimal such as `"0.25"` into an exact rational.
pub fn parse_rational(s: &str) -> Option<BigRational> {
    let s = s.trim();
    if let Some((p, q)) = s.split_once('/') {
        let p: BigInt = p.trim().parse().ok()?;
        let q: BigInt = q.trim().parse().ok()?;
        if q.is_zero() {
            return None;
        }
        return Some(BigRational::new(p, q));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let neg = int.starts_with('-');
        let digits = format!("{}{}", int.trim_start_matches('-'), frac);
        let n: BigInt = digits.parse().ok()?;
        let d = num_traits::pow(BigInt::from(10), frac.len());
        let q = BigRational::new(n, d);
        return Some(if neg { -q } else { q });
    }
    Some(BigRational::from_integer(s.parse().ok()?))
}

/// Canonical `"p/q"` (or `"p"`) rendering.
pub fn format_rational(q: &BigRational) -> String {
    if q.is_integer() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

pub fn rat(numer: i64, denom: i64) -> BigRational {
    BigRational::new(BigInt::from(numer), BigInt::from(denom))
}

/// Converts between scalar types through `f64` for floats and exactly otherwise.
pub fn rational_to_scalar<T: Scalar>(q: &BigRational) -> T {
    // Exact targets are reached through numerator/denominator when they fit.
    match (q.numer().to_i64(), q.denom().to_i64()) {
        (Some(n), Some(d)) => T::from_ratio(n, d),
        _ => T::from_f64(q.to_f64().unwrap_or(f64::NAN)).expect("finite value"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fractions_and_decimals() {
        assert_eq!(parse_rational("-3/12"), Some(rat(-1, 4)));
        assert_eq!(parse_rational("0.25"), Some(rat(1, 4)));
        assert_eq!(parse_rational("-1.5"), Some(rat(-3, 2)));
        assert_eq!(parse_rational("7"), Some(rat(7, 1)));
        assert_eq!(parse_rational("1/0"), None);
        assert_eq!(format_rational(&rat(6, -4)), "-3/2");
    }

    #[test]
    fn integrality() {
        assert_eq!(ExactScalar::to_integer(&rat(6, 3)), Some(2));
        assert_eq!(ExactScalar::to_integer(&rat(1, 2)), None);
        assert_eq!(ExactScalar::to_integer(&Ratio::new(-8i64, 4)), Some(-2));
    }
}
