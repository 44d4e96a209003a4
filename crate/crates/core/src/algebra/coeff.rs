//! Coefficient rings for vectors in T.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

pub trait Coeff:
    Clone + PartialEq + fmt::Debug + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    fn is_zero(&self) -> bool;
    fn from_i64(n: i64) -> Self;
}

impl Coeff for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn from_i64(n: i64) -> Self {
        n as f64
    }
}

impl Coeff for BigRational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn from_i64(n: i64) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }
}

pub fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

type Monomial = Vec<(String, u32)>;

/// Multivariate polynomial with rational coefficients in named formal
/// variables (renormalization constants, unknown coefficient fields).
#[derive(Clone, PartialEq, Eq, Default)]
pub struct FormalPoly {
    terms: BTreeMap<Monomial, BigRational>,
}

impl FormalPoly {
    pub fn constant(c: BigRational) -> Self {
        let mut p = FormalPoly::default();
        p.insert(Vec::new(), c);
        p
    }

    pub fn var(name: &str) -> Self {
        let mut p = FormalPoly::default();
        p.insert(vec![(name.to_string(), 1)], Coeff::one());
        p
    }

    pub fn scale(&self, c: i64) -> Self {
        self.clone() * FormalPoly::from_i64(c)
    }

    fn insert(&mut self, m: Monomial, c: BigRational) {
        if Zero::is_zero(&c) {
            return;
        }
        let e = self.terms.entry(m.clone()).or_insert_with(Zero::zero);
        *e += c;
        if Zero::is_zero(e) {
            self.terms.remove(&m);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &BigRational)> {
        self.terms.iter()
    }

    /// Substitutes numeric values for every variable.
    pub fn eval(&self, vals: &dyn Fn(&str) -> f64) -> f64 {
        self.terms
            .iter()
            .map(|(m, c)| {
                let cf = rat_to_f64(c);
                m.iter().fold(cf, |acc, (v, e)| acc * vals(v).powi(*e as i32))
            })
            .sum()
    }

    /// Sets the listed variables to zero.
    pub fn vanish(&self, vars: &[&str]) -> Self {
        let mut out = FormalPoly::default();
        for (m, c) in &self.terms {
            if m.iter().any(|(v, _)| vars.contains(&v.as_str())) {
                continue;
            }
            out.insert(m.clone(), c.clone());
        }
        out
    }

    pub fn variables(&self) -> Vec<String> {
        let mut v: Vec<String> = self.terms.keys().flat_map(|m| m.iter().map(|(n, _)| n.clone())).collect();
        v.sort();
        v.dedup();
        v
    }
}

pub fn rat_to_f64(c: &BigRational) -> f64 {
    use num_traits::ToPrimitive;
    c.to_f64().unwrap_or(f64::NAN)
}

fn mul_mono(a: &Monomial, b: &Monomial) -> Monomial {
    let mut m: BTreeMap<String, u32> = BTreeMap::new();
    for (v, e) in a.iter().chain(b.iter()) {
        *m.entry(v.clone()).or_insert(0) += e;
    }
    m.into_iter().collect()
}

impl Add for FormalPoly {
    type Output = FormalPoly;
    fn add(mut self, o: FormalPoly) -> FormalPoly {
        for (m, c) in o.terms {
            self.insert(m, c);
        }
        self
    }
}

impl Sub for FormalPoly {
    type Output = FormalPoly;
    fn sub(self, o: FormalPoly) -> FormalPoly {
        self + (-o)
    }
}

impl Neg for FormalPoly {
    type Output = FormalPoly;
    fn neg(self) -> FormalPoly {
        FormalPoly { terms: self.terms.into_iter().map(|(m, c)| (m, -c)).collect() }
    }
}

impl Mul for FormalPoly {
    type Output = FormalPoly;
    fn mul(self, o: FormalPoly) -> FormalPoly {
        let mut out = FormalPoly::default();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &o.terms {
                out.insert(mul_mono(ma, mb), ca * cb);
            }
        }
        out
    }
}

impl Coeff for FormalPoly {
    fn zero() -> Self {
        FormalPoly::default()
    }
    fn one() -> Self {
        FormalPoly::constant(Coeff::one())
    }
    fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
    fn from_i64(n: i64) -> Self {
        FormalPoly::constant(<BigRational as Coeff>::from_i64(n))
    }
}

impl fmt::Display for FormalPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (m, c)) in self.terms.iter().enumerate() {
            let neg = c.is_negative();
            let a = c.abs();
            if i == 0 {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if neg { '-' } else { '+' })?;
            }
            let mono: Vec<String> =
                m.iter().map(|(v, e)| if *e == 1 { v.clone() } else { format!("{v}^{e}") }).collect();
            if m.is_empty() {
                write!(f, "{a}")?;
            } else if One::is_one(&a) {
                write!(f, "{}", mono.join("*"))?;
            } else {
                write!(f, "{a}*{}", mono.join("*"))?;
            }
        }
        Ok(())
    }
}

impl fmt::Debug for FormalPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_arithmetic() {
        let c = FormalPoly::var("C");
        let ct = FormalPoly::var("Ct");
        let p = c.scale(3) - ct.scale(9);
        assert_eq!(p.to_string(), "3*C - 9*Ct");
        let sq = (c.clone() + ct.clone()) * (c.clone() - ct.clone());
        assert_eq!(sq, c.clone() * c.clone() - ct.clone() * ct.clone());
        assert!(Coeff::is_zero(&(p.clone() - p.clone())));
        assert_eq!(p.eval(&|v| if v == "C" { 2.0 } else { 1.0 }), -3.0);
        assert!(Coeff::is_zero(&p.vanish(&["C", "Ct"])));
    }
}
