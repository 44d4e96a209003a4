//! Exact orders `a + b·κ` with `a` rational and `b` integer.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Neg, Sub};

use num_rational::Ratio;
use num_traits::Zero;

use crate::error::{Error, Result};

pub type Q = Ratio<i64>;

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct OrderExpr {
    pub rational: Q,
    pub kappa: i64,
}

/// Admissible values of κ. Orders are compared at `eval`; a comparison is
/// accepted only if it gives the same answer at `lo` and `hi`.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct KappaRange {
    pub lo: Q,
    pub hi: Q,
    pub eval: Q,
}

impl Default for KappaRange {
    fn default() -> Self {
        KappaRange { lo: Q::new(1, 1000), hi: Q::new(1, 50), eval: Q::new(1, 100) }
    }
}

impl KappaRange {
    pub fn at(eval: Q) -> Self {
        let d = KappaRange::default();
        KappaRange {
            lo: if eval < d.lo { eval } else { d.lo },
            hi: if eval > d.hi { eval } else { d.hi },
            eval,
        }
    }
}

impl OrderExpr {
    pub const ZERO: OrderExpr = OrderExpr { rational: Ratio::new_raw(0, 1), kappa: 0 };

    pub fn new(rational: Q, kappa: i64) -> Self {
        OrderExpr { rational, kappa }
    }

    pub fn int(n: i64) -> Self {
        OrderExpr { rational: Q::from_integer(n), kappa: 0 }
    }

    pub fn rat(n: i64, d: i64) -> Self {
        OrderExpr { rational: Q::new(n, d), kappa: 0 }
    }

    pub fn eval(&self, kappa: Q) -> Q {
        self.rational + kappa * self.kappa
    }

    pub fn to_f64(&self, kappa: f64) -> f64 {
        *self.rational.numer() as f64 / *self.rational.denom() as f64 + kappa * self.kappa as f64
    }

    pub fn cmp_at(&self, other: &OrderExpr, kappa: Q) -> Ordering {
        self.eval(kappa).cmp(&other.eval(kappa))
    }

    /// Compares at `range.eval`, failing if either endpoint disagrees.
    pub fn cmp_in(&self, other: &OrderExpr, range: &KappaRange) -> Result<Ordering> {
        let mid = self.cmp_at(other, range.eval);
        let lo = self.cmp_at(other, range.lo);
        let hi = self.cmp_at(other, range.hi);
        if lo != mid || hi != mid {
            return Err(Error::AmbiguousOrder(format!("{self} vs {other}")));
        }
        Ok(mid)
    }

    pub fn le_in(&self, other: &OrderExpr, range: &KappaRange) -> Result<bool> {
        Ok(self.cmp_in(other, range)? != Ordering::Greater)
    }

    pub fn is_positive(&self, range: &KappaRange) -> Result<bool> {
        Ok(self.cmp_in(&OrderExpr::ZERO, range)? == Ordering::Greater)
    }

    /// Parses decimals such as `1.05`, fractions `3/2` or integers.
    pub fn parse_rational(s: &str) -> Result<Q> {
        let s = s.trim();
        let bad = || Error::Invalid(format!("cannot parse rational '{s}'"));
        if let Some((n, d)) = s.split_once('/') {
            let n: i64 = n.trim().parse().map_err(|_| bad())?;
            let d: i64 = d.trim().parse().map_err(|_| bad())?;
            if d == 0 {
                return Err(bad());
            }
            return Ok(Q::new(n, d));
        }
        let (neg, body) = match s.strip_prefix('-') {
            Some(b) => (true, b),
            None => (false, s),
        };
        let (ip, fp) = body.split_once('.').unwrap_or((body, ""));
        if ip.is_empty() && fp.is_empty() || fp.len() > 12 {
            return Err(bad());
        }
        let ip: i64 = if ip.is_empty() { 0 } else { ip.parse().map_err(|_| bad())? };
        let den = 10i64.pow(fp.len() as u32);
        let fv: i64 = if fp.is_empty() { 0 } else { fp.parse().map_err(|_| bad())? };
        let q = Q::new(ip * den + fv, den);
        Ok(if neg { -q } else { q })
    }
}

impl Add for OrderExpr {
    type Output = OrderExpr;
    fn add(self, o: OrderExpr) -> OrderExpr {
        OrderExpr { rational: self.rational + o.rational, kappa: self.kappa + o.kappa }
    }
}

impl Sub for OrderExpr {
    type Output = OrderExpr;
    fn sub(self, o: OrderExpr) -> OrderExpr {
        OrderExpr { rational: self.rational - o.rational, kappa: self.kappa - o.kappa }
    }
}

impl Neg for OrderExpr {
    type Output = OrderExpr;
    fn neg(self) -> OrderExpr {
        OrderExpr { rational: -self.rational, kappa: -self.kappa }
    }
}

impl fmt::Display for OrderExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = self.rational;
        let k = self.kappa;
        if k == 0 {
            return write!(f, "{r}");
        }
        let kpart = match k.abs() {
            1 => "κ".to_string(),
            a => format!("{a}κ"),
        };
        if r.is_zero() {
            if k < 0 {
                write!(f, "-{kpart}")
            } else {
                write!(f, "{kpart}")
            }
        } else {
            let sign = if k < 0 { '-' } else { '+' };
            write!(f, "{r} {sign} {kpart}")
        }
    }
}
