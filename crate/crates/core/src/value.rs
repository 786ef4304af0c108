//! Exact integer values.
//!
//! Values are unbounded signed integers. Booleans are encoded as `0`/`1`.
//! Small magnitudes are stored inline; anything outside the `i64` range
//! falls back to a shared big integer. The representation is normalized, so
//! the derived `Hash`/`Eq` agree with numeric equality.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Value(Repr);

#[derive(Clone, PartialEq, Eq, Hash)]
enum Repr {
    Small(i64),
    Big(Arc<BigInt>),
}

impl Value {
    pub const ZERO: Value = Value(Repr::Small(0));
    pub const ONE: Value = Value(Repr::Small(1));

    pub fn from_bool(b: bool) -> Value {
        if b {
            Value::ONE
        } else {
            Value::ZERO
        }
    }

    pub fn from_big(b: BigInt) -> Value {
        match b.to_i64() {
            Some(v) => Value(Repr::Small(v)),
            None => Value(Repr::Big(Arc::new(b))),
        }
    }

    pub fn to_big(&self) -> BigInt {
        match &self.0 {
            Repr::Small(v) => BigInt::from(*v),
            Repr::Big(b) => (**b).clone(),
        }
    }

    pub fn to_i64(&self) -> Option<i64> {
        match &self.0 {
            Repr::Small(v) => Some(*v),
            Repr::Big(_) => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.0, Repr::Small(0))
    }

    /// Truthiness of a 0/1 boolean; any nonzero value counts as true.
    pub fn truthy(&self) -> bool {
        !self.is_zero()
    }

    fn lift(
        &self,
        other: &Value,
        small: impl Fn(i64, i64) -> Option<i64>,
        big: impl Fn(BigInt, BigInt) -> BigInt,
    ) -> Value {
        if let (Repr::Small(a), Repr::Small(b)) = (&self.0, &other.0) {
            if let Some(r) = small(*a, *b) {
                return Value(Repr::Small(r));
            }
        }
        Value::from_big(big(self.to_big(), other.to_big()))
    }

    pub fn add(&self, other: &Value) -> Value {
        self.lift(other, i64::checked_add, |a, b| a + b)
    }

    pub fn sub(&self, other: &Value) -> Value {
        self.lift(other, i64::checked_sub, |a, b| a - b)
    }

    pub fn mul(&self, other: &Value) -> Value {
        self.lift(other, i64::checked_mul, |a, b| a * b)
    }

    /// Truncating division; `None` on a zero divisor.
    pub fn div(&self, other: &Value) -> Option<Value> {
        if other.is_zero() {
            return None;
        }
        Some(self.lift(other, i64::checked_div, |a, b| a / b))
    }

    /// Remainder with the sign of the dividend; `None` on a zero divisor.
    pub fn rem(&self, other: &Value) -> Option<Value> {
        if other.is_zero() {
            return None;
        }
        Some(self.lift(other, i64::checked_rem, |a, b| a % b))
    }

    pub fn neg(&self) -> Value {
        Value::ZERO.sub(self)
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value(Repr::Small(v))
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::from_bool(b)
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        match (&self.0, &other.0) {
            (Repr::Small(a), Repr::Small(b)) => a.cmp(b),
            _ => self.to_big().cmp(&other.to_big()),
        }
    }
}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Default for Value {
    fn default() -> Self {
        Value::ZERO
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0 {
            Repr::Small(v) => write!(f, "{v}"),
            Repr::Big(b) => write!(f, "{b}"),
        }
    }
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl std::str::FromStr for Value {
    type Err = num_bigint::ParseBigIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(Value::from_big(s.parse::<BigInt>()?))
    }
}

impl Zero for Value {
    fn zero() -> Self {
        Value::ZERO
    }

    fn is_zero(&self) -> bool {
        Value::is_zero(self)
    }
}

impl std::ops::Add for Value {
    type Output = Value;

    fn add(self, rhs: Value) -> Value {
        Value::add(&self, &rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overflow_promotes_to_big() {
        let max = Value::from(i64::MAX);
        let sum = max.add(&Value::ONE);
        assert_eq!(sum.to_string(), "9223372036854775808");
        assert!(sum.to_i64().is_none());
        // and comes back down
        assert_eq!(sum.sub(&Value::ONE), max);
    }

    #[test]
    fn min_div_minus_one_is_exact() {
        let min = Value::from(i64::MIN);
        let q = min.div(&Value::from(-1)).unwrap();
        assert_eq!(q.to_string(), "9223372036854775808");
    }

    #[test]
    fn division_by_zero_is_none() {
        assert!(Value::from(1).div(&Value::ZERO).is_none());
        assert!(Value::from(1).rem(&Value::ZERO).is_none());
    }

    #[test]
    fn truncating_semantics() {
        assert_eq!(Value::from(-7).div(&Value::from(2)).unwrap(), Value::from(-3));
        assert_eq!(Value::from(-7).rem(&Value::from(2)).unwrap(), Value::from(-1));
    }

    #[test]
    fn ordering_mixes_representations() {
        let big = Value::from(i64::MAX).add(&Value::from(10));
        assert!(big > Value::from(i64::MAX));
        assert!(big.neg() < Value::from(i64::MIN));
    }
}
