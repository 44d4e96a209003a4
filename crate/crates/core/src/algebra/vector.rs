//! Finite linear combinations of symbols.

use std::collections::BTreeMap;

use super::coeff::Coeff;
use super::symbol::Symbol;

#[derive(Clone, PartialEq, Debug)]
pub struct Vector<R: Coeff> {
    terms: BTreeMap<Symbol, R>,
}

impl<R: Coeff> Default for Vector<R> {
    fn default() -> Self {
        Vector { terms: BTreeMap::new() }
    }
}

impl<R: Coeff> Vector<R> {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn basis(s: Symbol) -> Self {
        Self::term(s, R::one())
    }

    pub fn term(s: Symbol, c: R) -> Self {
        let mut v = Self::default();
        v.add_term(s, c);
        v
    }

    pub fn add_term(&mut self, s: Symbol, c: R) {
        if c.is_zero() {
            return;
        }
        match self.terms.remove(&s) {
            Some(old) => {
                let n = old + c;
                if !n.is_zero() {
                    self.terms.insert(s, n);
                }
            }
            None => {
                self.terms.insert(s, c);
            }
        }
    }

    pub fn get(&self, s: &Symbol) -> R {
        self.terms.get(s).cloned().unwrap_or_else(R::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Symbol, &R)> {
        self.terms.iter()
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut out = self.clone();
        for (s, c) in &o.terms {
            out.add_term(s.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.scale(&(-R::one())))
    }

    pub fn scale(&self, c: &R) -> Self {
        let mut out = Self::default();
        for (s, v) in &self.terms {
            out.add_term(s.clone(), v.clone() * c.clone());
        }
        out
    }

    pub fn filter(&self, keep: impl Fn(&Symbol) -> bool) -> Self {
        Vector { terms: self.terms.iter().filter(|(s, _)| keep(s)).map(|(s, c)| (s.clone(), c.clone())).collect() }
    }

    pub fn map_coeffs<S: Coeff>(&self, f: impl Fn(&R) -> S) -> Vector<S> {
        let mut out = Vector::default();
        for (s, c) in &self.terms {
            out.add_term(s.clone(), f(c));
        }
        out
    }

    /// Bilinear product without truncation.
    pub fn mul_free(&self, o: &Self, d: usize) -> Self {
        let mut out = Self::default();
        for (a, ca) in &self.terms {
            for (b, cb) in &o.terms {
                out.add_term(a.mul(b, d), ca.clone() * cb.clone());
            }
        }
        out
    }

    /// Linear extension of abstract integration: `I[X^k] = 0`.
    pub fn integ(&self) -> Self {
        let mut out = Self::default();
        for (s, c) in &self.terms {
            if !s.is_poly() {
                out.add_term(Symbol::integ(s.clone()), c.clone());
            }
        }
        out
    }
}
