//! Renormalization maps with coefficients polynomial in formal constants.

use std::collections::BTreeMap;

use super::coeff::{Coeff, FormalPoly};
use super::symbol::{trees::*, Symbol};
use super::vector::Vector;

pub const C: &str = "C";
pub const CT: &str = "Ct";

#[derive(Clone, Debug, PartialEq, Default)]
pub struct RenormMap {
    pub substitutions: BTreeMap<Symbol, Vector<FormalPoly>>,
}

fn c() -> FormalPoly {
    FormalPoly::var(C)
}

fn ct() -> FormalPoly {
    FormalPoly::var(CT)
}

fn vec_of(terms: Vec<(Symbol, FormalPoly)>) -> Vector<FormalPoly> {
    let mut v = Vector::zero();
    for (s, k) in terms {
        v.add_term(s, k);
    }
    v
}

impl RenormMap {
    pub fn identity() -> Self {
        Self::default()
    }

    /// `M<2> = <2> - C`, `M<3> = <3> - 3C<1>`.
    pub fn phi4_2() -> Self {
        let d = 2;
        let one = FormalPoly::one();
        let mut m = BTreeMap::new();
        m.insert(tn(d, 2), vec_of(vec![(tn(d, 2), one.clone()), (Symbol::unit(d), -c())]));
        m.insert(tn(d, 3), vec_of(vec![(tn(d, 3), one), (t1(), -c().scale(3))]));
        RenormMap { substitutions: m }
    }

    /// The three-dimensional substitution table.
    pub fn phi4_3() -> Self {
        let d = 3;
        let one = FormalPoly::one();
        let u = Symbol::unit(d);
        let mut m = BTreeMap::new();
        m.insert(tn(d, 2), vec_of(vec![(tn(d, 2), one.clone()), (u.clone(), -c())]));
        for j in 1..=d {
            let xj = Symbol::x(d, j);
            let s = Symbol::product(d, [xj.clone(), tn(d, 2)]);
            m.insert(s.clone(), vec_of(vec![(s, one.clone()), (xj, -c())]));
        }
        m.insert(
            tab(d, 2, 2),
            vec_of(vec![(tab(d, 2, 2), one.clone()), (tn0(d, 2), -c()), (u.clone(), -ct())]),
        );
        m.insert(
            tab(d, 3, 2),
            vec_of(vec![
                (tab(d, 3, 2), one.clone()),
                (tab(d, 1, 2), -c().scale(3)),
                (tn0(d, 3), -c()),
                (tn0(d, 1), (c() * c()).scale(3)),
                (t1(), -ct().scale(3)),
            ]),
        );
        m.insert(tn(d, 3), vec_of(vec![(tn(d, 3), one.clone()), (t1(), -c().scale(3))]));
        m.insert(tab(d, 1, 2), vec_of(vec![(tab(d, 1, 2), one.clone()), (tn0(d, 1), -c())]));
        m.insert(tab(d, 3, 1), vec_of(vec![(tab(d, 3, 1), one), (tab(d, 1, 1), -c().scale(3))]));
        RenormMap { substitutions: m }
    }

    pub fn for_dimension(d: usize) -> Self {
        match d {
            2 => Self::phi4_2(),
            3 => Self::phi4_3(),
            _ => Self::identity(),
        }
    }

    pub fn image(&self, s: &Symbol) -> Vector<FormalPoly> {
        self.substitutions.get(s).cloned().unwrap_or_else(|| Vector::basis(s.clone()))
    }

    pub fn apply(&self, v: &Vector<FormalPoly>) -> Vector<FormalPoly> {
        let mut out = Vector::zero();
        for (s, k) in v.iter() {
            out = out.add(&self.image(s).scale(k));
        }
        out
    }

    /// Numeric instance of the map.
    pub fn numeric(&self, c_val: f64, ct_val: f64) -> BTreeMap<Symbol, Vector<f64>> {
        let f = |v: &str| match v {
            C => c_val,
            CT => ct_val,
            _ => f64::NAN,
        };
        self.substitutions.iter().map(|(s, v)| (s.clone(), v.map_coeffs(|p| p.eval(&f)))).collect()
    }

    pub fn at_zero(&self) -> Self {
        RenormMap {
            substitutions: self
                .substitutions
                .iter()
                .map(|(s, v)| (s.clone(), v.map_coeffs(|p| p.vanish(&[C, CT]))))
                .collect(),
        }
    }
}
