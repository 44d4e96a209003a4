//! Derivation of the mass counterterm from the renormalized cube.

use super::coeff::{Coeff, FormalPoly};
use super::renorm::RenormMap;
use super::structure::RegularityStructure;
use super::symbol::{trees::*, Symbol};
use super::vector::Vector;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct CountertermReport {
    /// `c` in `M Φ³ = (MΦ)³ - c·MΦ`.
    pub c: FormalPoly,
    pub ansatz: Vector<FormalPoly>,
    /// Non-positive part of `Φ³`.
    pub cube: Vector<FormalPoly>,
    /// Non-positive part of `M Φ³`.
    pub renormalized_cube: Vector<FormalPoly>,
    pub residual: Vector<FormalPoly>,
}

/// Solution ansatz with formal coefficient fields `phi1`, `phiX1..`.
pub fn ansatz(d: usize) -> Result<Vector<FormalPoly>> {
    let one = FormalPoly::one();
    let phi1 = FormalPoly::var("phi1");
    let mut v = Vector::zero();
    v.add_term(t1(), one.clone());
    v.add_term(Symbol::unit(d), phi1.clone());
    match d {
        2 => {}
        3 => {
            v.add_term(tn0(d, 3), -one);
            v.add_term(tn0(d, 2), -phi1.scale(3));
            for j in 1..=d {
                v.add_term(Symbol::x(d, j), FormalPoly::var(&format!("phiX{j}")));
            }
        }
        _ => return Err(Error::Invalid(format!("no Phi^4 ansatz in dimension {d}"))),
    }
    Ok(v)
}

fn non_positive(v: &Vector<FormalPoly>, s: &RegularityStructure) -> Result<Vector<FormalPoly>> {
    let mut out = Vector::zero();
    for (t, c) in v.iter() {
        if !t.order(s.dimension).is_positive(&s.kappa)? {
            out.add_term(t.clone(), c.clone());
        }
    }
    Ok(out)
}

fn cube(v: &Vector<FormalPoly>, s: &RegularityStructure) -> Result<Vector<FormalPoly>> {
    let d = s.dimension;
    non_positive(&v.mul_free(v, d).mul_free(v, d), s)
}

pub fn derive_counterterm(structure: &RegularityStructure, m: &RenormMap) -> Result<CountertermReport> {
    let phi = ansatz(structure.dimension)?;
    let phi3 = cube(&phi, structure)?;
    let m_phi3 = non_positive(&m.apply(&phi3), structure)?;
    let m_phi = m.apply(&phi);
    let cube_m_phi = cube(&m_phi, structure)?;
    let e = cube_m_phi.sub(&m_phi3);
    let m_phi_red = non_positive(&m_phi, structure)?;
    let c = e.get(&t1());
    let residual = e.sub(&m_phi_red.scale(&c));
    if !residual.is_zero() {
        let txt: Vec<String> = residual.iter().map(|(s, k)| format!("({k})·{s}")).collect();
        return Err(Error::Reduction(txt.join(" + ")));
    }
    if c.variables().iter().any(|v| v.starts_with("phi")) {
        return Err(Error::Reduction(format!("counterterm depends on the solution: {c}")));
    }
    Ok(CountertermReport { c, ansatz: phi, cube: phi3, renormalized_cube: m_phi3, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::order::OrderExpr;
    use crate::algebra::renorm::{C, CT};

    #[test]
    fn phi4_2_gives_three_c() {
        let s = RegularityStructure::phi4(2, OrderExpr::rat(1, 10)).unwrap();
        let r = derive_counterterm(&s, &RenormMap::phi4_2()).unwrap();
        assert_eq!(r.c, FormalPoly::var(C).scale(3));
    }

    #[test]
    fn identity_gives_zero() {
        for (d, g) in [(2, OrderExpr::rat(1, 10)), (3, OrderExpr::rat(21, 20))] {
            let s = RegularityStructure::phi4(d, g).unwrap();
            let r = derive_counterterm(&s, &RenormMap::identity()).unwrap();
            assert!(Coeff::is_zero(&r.c));
            assert!(r.residual.is_zero());
        }
    }

    #[test]
    fn phi4_3_cube_has_the_listed_terms() {
        let d = 3;
        let s = RegularityStructure::phi4(d, OrderExpr::rat(21, 20)).unwrap();
        let r = derive_counterterm(&s, &RenormMap::phi4_3()).unwrap();
        let phi1 = FormalPoly::var("phi1");
        assert_eq!(r.cube.get(&tn(d, 3)), FormalPoly::one());
        assert_eq!(r.cube.get(&tn(d, 2)), phi1.scale(3));
        assert_eq!(r.cube.get(&tab(d, 3, 2)), FormalPoly::from_i64(-3));
        assert_eq!(r.cube.get(&tab(d, 3, 1)), phi1.scale(-6));
        assert_eq!(r.cube.get(&tab(d, 2, 2)), phi1.scale(-9));
        assert_eq!(r.cube.get(&Symbol::unit(d)), phi1.clone() * phi1.clone() * phi1);
        assert_eq!(r.cube.len(), 10);
        // substitution table as tabulated yields 3C - 9C~
        assert_eq!(r.c, FormalPoly::var(C).scale(3) - FormalPoly::var(CT).scale(9));
    }
}
