//! Structure group: polynomial translations plus free shifts on planted
//! symbols of positive order.

use std::collections::BTreeMap;

use super::coeff::Coeff;
use super::structure::RegularityStructure;
use super::symbol::{multi_indices, parabolic_degree, Symbol};
use super::vector::Vector;
use crate::error::{Error, Result};

/// `Γ X^k = (X - h)^k`, `Γ I[τ] = I[Γτ] + Σ_{|ℓ|_s < |I[τ]|} g(I[τ], ℓ) X^ℓ`,
/// multiplicative on products.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupElement<R: Coeff> {
    pub poly_shift: Vec<R>,
    pub integ_shifts: BTreeMap<(Symbol, Vec<u32>), R>,
}

/// Shift parameters available in a structure: positive-order planted
/// symbols paired with the multi-indices below their order.
pub fn shift_domain(structure: &RegularityStructure) -> Vec<(Symbol, Vec<u32>)> {
    let d = structure.dimension;
    let k = structure.kappa_f64();
    let mut out = Vec::new();
    for p in &structure.planted {
        let o = p.order(d).to_f64(k);
        if o <= 0.0 {
            continue;
        }
        for l in multi_indices(d, o.ceil() as u32) {
            if (parabolic_degree(&l) as f64) < o {
                out.push((p.clone(), l));
            }
        }
    }
    out
}

impl<R: Coeff> GroupElement<R> {
    pub fn identity(d: usize) -> Self {
        GroupElement { poly_shift: vec![R::zero(); d + 1], integ_shifts: BTreeMap::new() }
    }

    pub fn translation(h: Vec<R>) -> Self {
        GroupElement { poly_shift: h, integ_shifts: BTreeMap::new() }
    }

    fn dim(&self) -> usize {
        self.poly_shift.len() - 1
    }

    /// Action on a single tree, without truncation.
    pub fn act(&self, tau: &Symbol) -> Vector<R> {
        let d = self.dim();
        match tau {
            Symbol::Xi => Vector::basis(Symbol::Xi),
            Symbol::Poly(k) => {
                let mut v = Vector::basis(Symbol::unit(d));
                for (i, &ki) in k.iter().enumerate() {
                    let mut lin = Vector::basis(Symbol::x(d, i));
                    lin.add_term(Symbol::unit(d), -self.poly_shift[i].clone());
                    for _ in 0..ki {
                        v = v.mul_free(&lin, d);
                    }
                }
                v
            }
            Symbol::Integ(c) => {
                let mut v = self.act(c).integ();
                for ((s, l), g) in &self.integ_shifts {
                    if s == tau {
                        v.add_term(Symbol::Poly(l.clone()), g.clone());
                    }
                }
                v
            }
            Symbol::Product(ch) => {
                let mut v = Vector::basis(Symbol::unit(d));
                for c in ch {
                    v = v.mul_free(&self.act(c), d);
                }
                v
            }
        }
    }

    /// Action on a structure symbol, truncated to the structure.
    pub fn apply(&self, tau: &Symbol, structure: &RegularityStructure) -> Result<Vector<R>> {
        if !structure.contains(tau) {
            return Err(Error::UnknownSymbol(tau.to_string()));
        }
        Ok(structure.project(&self.act(tau)))
    }

    pub fn apply_vec(&self, v: &Vector<R>, structure: &RegularityStructure) -> Result<Vector<R>> {
        let mut out = Vector::zero();
        for (s, c) in v.iter() {
            out = out.add(&self.apply(s, structure)?.scale(c));
        }
        Ok(out)
    }

    fn act_vec(&self, v: &Vector<R>) -> Vector<R> {
        let mut out = Vector::zero();
        for (s, c) in v.iter() {
            out = out.add(&self.act(s).scale(c));
        }
        out
    }

    /// The element acting as `self ∘ other`.
    pub fn compose(&self, other: &Self, structure: &RegularityStructure) -> Self {
        let poly_shift =
            self.poly_shift.iter().zip(&other.poly_shift).map(|(a, b)| a.clone() + b.clone()).collect();
        let mut integ_shifts = BTreeMap::new();
        for (p, l) in shift_domain(structure) {
            let v = self.act_vec(&other.act(&p));
            let c = v.get(&Symbol::Poly(l.clone()));
            if !c.is_zero() {
                integ_shifts.insert((p, l), c);
            }
        }
        GroupElement { poly_shift, integ_shifts }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::coeff::q;
    use crate::algebra::order::OrderExpr;
    use crate::algebra::symbol::trees::*;
    use num_rational::BigRational;

    #[test]
    fn translation_of_x() {
        let s = RegularityStructure::polynomial(2, OrderExpr::int(2)).unwrap();
        let g = GroupElement::translation(vec![q(0, 1), q(3, 2), q(0, 1)]);
        let v = g.apply(&Symbol::x(2, 1), &s).unwrap();
        let mut want = Vector::basis(Symbol::x(2, 1));
        want.add_term(Symbol::unit(2), q(-3, 2));
        assert_eq!(v, want);
    }

    #[test]
    fn identity_acts_trivially() {
        let s = RegularityStructure::phi4(3, OrderExpr::rat(21, 20)).unwrap();
        let e = GroupElement::<BigRational>::identity(3);
        for (t, _) in &s.symbols {
            assert_eq!(e.apply(t, &s).unwrap(), Vector::basis(t.clone()));
        }
    }

    #[test]
    fn shift_on_i3_gives_constant() {
        // Γ <30> = <30> + g·1 (order 1/2 - 3κ admits only ℓ = 0)
        let s = RegularityStructure::phi4(3, OrderExpr::rat(21, 20)).unwrap();
        let mut g = GroupElement::<BigRational>::identity(3);
        g.integ_shifts.insert((tn0(3, 3), vec![0; 4]), q(5, 1));
        let v = g.apply(&tab(3, 3, 2), &s).unwrap();
        let mut want = Vector::basis(tab(3, 3, 2));
        want.add_term(tn(3, 2), q(5, 1));
        assert_eq!(v, want);
        let dom = shift_domain(&s);
        assert_eq!(dom.iter().filter(|(p, _)| *p == tn0(3, 3)).count(), 1);
        assert_eq!(dom.iter().filter(|(p, _)| *p == tn0(3, 1)).count(), 4);
    }
}
