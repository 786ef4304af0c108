use std::cmp::Ordering;
use std::fmt;

use crate::value::Value;

/// An integer or an infinity.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Bound {
    NegInf,
    Fin(Value),
    PosInf,
}

impl PartialOrd for Bound {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Bound {
    fn cmp(&self, other: &Self) -> Ordering {
        use Bound::*;
        match (self, other) {
            (NegInf, NegInf) | (PosInf, PosInf) => Ordering::Equal,
            (NegInf, _) | (_, PosInf) => Ordering::Less,
            (_, NegInf) | (PosInf, _) => Ordering::Greater,
            (Fin(a), Fin(b)) => a.cmp(b),
        }
    }
}

impl Bound {
    fn sign(&self) -> Ordering {
        match self {
            Bound::NegInf => Ordering::Less,
            Bound::PosInf => Ordering::Greater,
            Bound::Fin(v) => v.cmp(&Value::ZERO),
        }
    }

    fn inf(sign: Ordering) -> Bound {
        match sign {
            Ordering::Less => Bound::NegInf,
            Ordering::Greater => Bound::PosInf,
            Ordering::Equal => Bound::Fin(Value::ZERO),
        }
    }

    fn neg(&self) -> Bound {
        match self {
            Bound::NegInf => Bound::PosInf,
            Bound::PosInf => Bound::NegInf,
            Bound::Fin(v) => Bound::Fin(v.neg()),
        }
    }

    /// Sum; `-inf + +inf` does not arise from interval addition.
    fn add(&self, o: &Bound) -> Bound {
        match (self, o) {
            (Bound::Fin(a), Bound::Fin(b)) => Bound::Fin(a.add(b)),
            (Bound::Fin(_), inf) | (inf, _) => inf.clone(),
        }
    }

    fn mul(&self, o: &Bound) -> Bound {
        match (self, o) {
            (Bound::Fin(a), Bound::Fin(b)) => Bound::Fin(a.mul(b)),
            _ => {
                let s = match (self.sign(), o.sign()) {
                    (Ordering::Equal, _) | (_, Ordering::Equal) => Ordering::Equal,
                    (a, b) if a == b => Ordering::Greater,
                    _ => Ordering::Less,
                };
                Bound::inf(s)
            }
        }
    }

    /// Truncating division by a non-zero bound.
    fn div(&self, o: &Bound) -> Bound {
        match (self, o) {
            (Bound::Fin(a), Bound::Fin(b)) => Bound::Fin(a.div(b).expect("non-zero divisor")),
            (Bound::Fin(_), _) => Bound::Fin(Value::ZERO),
            (inf, d) => {
                let s = if inf.sign() == d.sign() { Ordering::Greater } else { Ordering::Less };
                Bound::inf(s)
            }
        }
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::NegInf => f.write_str("-inf"),
            Bound::PosInf => f.write_str("+inf"),
            Bound::Fin(v) => write!(f, "{v}"),
        }
    }
}

/// A set of integers `[lo, hi]`, or the empty set.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Interval {
    Empty,
    Range { lo: Bound, hi: Bound },
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Interval::Empty => f.write_str("empty"),
            Interval::Range { lo, hi } => write!(f, "[{lo},{hi}]"),
        }
    }
}

impl Interval {
    pub fn top() -> Self {
        Interval::Range {
            lo: Bound::NegInf,
            hi: Bound::PosInf,
        }
    }

    pub fn bool_top() -> Self {
        Interval::new(Bound::Fin(Value::ZERO), Bound::Fin(Value::ONE))
    }

    pub fn new(lo: Bound, hi: Bound) -> Self {
        if lo > hi || lo == Bound::PosInf || hi == Bound::NegInf {
            Interval::Empty
        } else {
            Interval::Range { lo, hi }
        }
    }

    pub fn singleton(v: Value) -> Self {
        Interval::new(Bound::Fin(v.clone()), Bound::Fin(v))
    }

    pub fn of_bool(b: bool) -> Self {
        Interval::singleton(Value::from_bool(b))
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Interval::Empty)
    }

    pub fn is_top(&self) -> bool {
        *self == Interval::top()
    }

    pub fn bounds(&self) -> Option<(&Bound, &Bound)> {
        match self {
            Interval::Empty => None,
            Interval::Range { lo, hi } => Some((lo, hi)),
        }
    }

    pub fn as_singleton(&self) -> Option<&Value> {
        match self {
            Interval::Range {
                lo: Bound::Fin(a),
                hi: Bound::Fin(b),
            } if a == b => Some(a),
            _ => None,
        }
    }

    pub fn contains(&self, v: &Value) -> bool {
        match self {
            Interval::Empty => false,
            Interval::Range { lo, hi } => {
                let b = Bound::Fin(v.clone());
                *lo <= b && b <= *hi
            }
        }
    }

    pub fn contains_zero(&self) -> bool {
        self.contains(&Value::ZERO)
    }

    pub fn leq(&self, o: &Interval) -> bool {
        match (self, o) {
            (Interval::Empty, _) => true,
            (_, Interval::Empty) => false,
            (Interval::Range { lo: a, hi: b }, Interval::Range { lo: c, hi: d }) => c <= a && b <= d,
        }
    }

    pub fn join(&self, o: &Interval) -> Interval {
        match (self, o) {
            (Interval::Empty, x) | (x, Interval::Empty) => x.clone(),
            (Interval::Range { lo: a, hi: b }, Interval::Range { lo: c, hi: d }) => {
                Interval::new(a.min(c).clone(), b.max(d).clone())
            }
        }
    }

    pub fn meet(&self, o: &Interval) -> Interval {
        match (self, o) {
            (Interval::Empty, _) | (_, Interval::Empty) => Interval::Empty,
            (Interval::Range { lo: a, hi: b }, Interval::Range { lo: c, hi: d }) => {
                Interval::new(a.max(c).clone(), b.min(d).clone())
            }
        }
    }

    /// Bounds that grew jump to infinity.
    pub fn widen(&self, next: &Interval) -> Interval {
        match (self, next) {
            (Interval::Empty, x) => x.clone(),
            (x, Interval::Empty) => x.clone(),
            (Interval::Range { lo: a, hi: b }, Interval::Range { lo: c, hi: d }) => Interval::new(
                if c < a { Bound::NegInf } else { a.clone() },
                if d > b { Bound::PosInf } else { b.clone() },
            ),
        }
    }

    /// Infinite bounds are refined by `next`.
    pub fn narrow(&self, next: &Interval) -> Interval {
        match (self, next) {
            (Interval::Empty, _) | (_, Interval::Empty) => Interval::Empty,
            (Interval::Range { lo: a, hi: b }, Interval::Range { lo: c, hi: d }) => Interval::new(
                if *a == Bound::NegInf { c.clone() } else { a.clone() },
                if *b == Bound::PosInf { d.clone() } else { b.clone() },
            ),
        }
    }

    fn lift2(&self, o: &Interval, f: impl Fn(&Bound, &Bound, &Bound, &Bound) -> Interval) -> Interval {
        match (self, o) {
            (Interval::Range { lo: a, hi: b }, Interval::Range { lo: c, hi: d }) => f(a, b, c, d),
            _ => Interval::Empty,
        }
    }

    pub fn neg(&self) -> Interval {
        match self {
            Interval::Empty => Interval::Empty,
            Interval::Range { lo, hi } => Interval::new(hi.neg(), lo.neg()),
        }
    }

    pub fn add(&self, o: &Interval) -> Interval {
        self.lift2(o, |a, b, c, d| Interval::new(a.add(c), b.add(d)))
    }

    pub fn sub(&self, o: &Interval) -> Interval {
        self.add(&o.neg())
    }

    pub fn mul(&self, o: &Interval) -> Interval {
        self.lift2(o, |a, b, c, d| {
            let ps = [a.mul(c), a.mul(d), b.mul(c), b.mul(d)];
            let lo = ps.iter().min().unwrap().clone();
            let hi = ps.iter().max().unwrap().clone();
            Interval::new(lo, hi)
        })
    }

    /// Truncating division; quotients by zero are dropped (they fail at run
    /// time).
    pub fn div(&self, o: &Interval) -> Interval {
        if self.is_empty() || o.is_empty() {
            return Interval::Empty;
        }
        let pos = o.meet(&Interval::new(Bound::Fin(Value::ONE), Bound::PosInf));
        let neg = o.meet(&Interval::new(Bound::NegInf, Bound::Fin(Value::from(-1))));
        let part = |d: &Interval| {
            self.lift2(d, |a, b, c, e| {
                let qs = [a.div(c), a.div(e), b.div(c), b.div(e)];
                Interval::new(qs.iter().min().unwrap().clone(), qs.iter().max().unwrap().clone())
            })
        };
        part(&pos).join(&part(&neg))
    }

    /// Truncating remainder: the sign follows the dividend and the
    /// magnitude is below the divisor's.
    pub fn rem(&self, o: &Interval) -> Interval {
        let (Some((a, b)), Some((c, d))) = (self.bounds(), o.bounds()) else {
            return Interval::Empty;
        };
        let mag = c.neg().max(d.clone());
        let m1 = match &mag {
            Bound::Fin(v) => Bound::Fin(v.sub(&Value::ONE)),
            other => other.clone(),
        };
        let zero = Bound::Fin(Value::ZERO);
        let lo = if *a >= zero { zero.clone() } else { m1.neg().max(a.clone()) };
        let hi = if *b <= zero { zero } else { m1.min(b.clone()) };
        Interval::new(lo, hi)
    }

    fn truth(&self) -> (bool, bool) {
        // (may be false, may be true)
        match self {
            Interval::Empty => (false, false),
            i => (i.contains_zero(), i.as_singleton() != Some(&Value::ZERO)),
        }
    }

    fn of_truth(may_false: bool, may_true: bool) -> Interval {
        match (may_false, may_true) {
            (false, false) => Interval::Empty,
            (true, false) => Interval::of_bool(false),
            (false, true) => Interval::of_bool(true),
            (true, true) => Interval::bool_top(),
        }
    }

    pub fn not(&self) -> Interval {
        let (f, t) = self.truth();
        Interval::of_truth(t, f)
    }

    pub fn and(&self, o: &Interval) -> Interval {
        let ((af, at), (bf, bt)) = (self.truth(), o.truth());
        if self.is_empty() || o.is_empty() {
            return Interval::Empty;
        }
        Interval::of_truth(af || bf, at && bt)
    }

    pub fn or(&self, o: &Interval) -> Interval {
        let ((af, at), (bf, bt)) = (self.truth(), o.truth());
        if self.is_empty() || o.is_empty() {
            return Interval::Empty;
        }
        Interval::of_truth(af && bf, at || bt)
    }

    pub fn implies(&self, o: &Interval) -> Interval {
        self.not().or(o)
    }

    pub fn lt(&self, o: &Interval) -> Interval {
        self.lift2(o, |a, b, c, d| Interval::of_truth(b >= c, a < d))
    }

    pub fn le(&self, o: &Interval) -> Interval {
        self.lift2(o, |a, b, c, d| Interval::of_truth(b > c, a <= d))
    }

    pub fn eq(&self, o: &Interval) -> Interval {
        if self.is_empty() || o.is_empty() {
            return Interval::Empty;
        }
        let may_true = !self.meet(o).is_empty();
        let may_false = !(self.as_singleton().is_some() && self.as_singleton() == o.as_singleton());
        Interval::of_truth(may_false, may_true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(lo: i64, hi: i64) -> Interval {
        Interval::new(Bound::Fin(lo.into()), Bound::Fin(hi.into()))
    }

    #[test]
    fn arithmetic() {
        assert_eq!(iv(1, 2).add(&iv(3, 4)), iv(4, 6));
        assert_eq!(iv(-2, 3).mul(&iv(-1, 4)), iv(-8, 12));
        assert_eq!(iv(7, 9).div(&iv(2, 2)), iv(3, 4));
        assert_eq!(iv(-7, 7).div(&iv(-2, 2)), iv(-7, 7));
        assert_eq!(iv(-5, 10).rem(&iv(3, 3)), iv(-2, 2));
        assert_eq!(iv(0, 1).sub(&iv(0, 1)), iv(-1, 1));
        let half = Interval::new(Bound::Fin(0.into()), Bound::PosInf);
        assert_eq!(half.mul(&iv(-1, -1)), Interval::new(Bound::NegInf, Bound::Fin(0.into())));
    }

    #[test]
    fn comparisons() {
        assert_eq!(iv(0, 1).lt(&iv(2, 3)), Interval::of_bool(true));
        assert_eq!(iv(3, 4).lt(&iv(2, 3)), Interval::of_bool(false));
        assert_eq!(iv(0, 3).lt(&iv(2, 3)), Interval::bool_top());
        assert_eq!(iv(2, 2).eq(&iv(2, 2)), Interval::of_bool(true));
        assert_eq!(iv(0, 1).eq(&iv(2, 2)), Interval::of_bool(false));
        assert_eq!(iv(0, 1).le(&iv(1, 1)), Interval::of_bool(true));
    }

    #[test]
    fn lattice() {
        assert_eq!(iv(0, 1).join(&iv(5, 6)), iv(0, 6));
        assert_eq!(iv(0, 4).meet(&iv(5, 6)), Interval::Empty);
        let w = iv(0, 1).widen(&iv(0, 2));
        assert_eq!(w, Interval::new(Bound::Fin(0.into()), Bound::PosInf));
        assert_eq!(w.narrow(&iv(0, 9)), iv(0, 9));
        assert!(iv(1, 2).leq(&iv(0, 3)));
    }
}
