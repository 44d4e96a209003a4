//! Rule-driven generation of truncated regularity structures.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use num_traits::ToPrimitive;

use super::coeff::Coeff;
use super::order::{KappaRange, OrderExpr, Q};
use super::symbol::{multi_indices, Symbol};
use super::vector::Vector;
use crate::error::{Error, Result};

/// One production shape: `X^k I[·]…I[·]` with `slots` integrated factors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shape {
    pub slots: usize,
    pub poly: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RuleSet {
    pub name: String,
    pub shapes: Vec<Shape>,
}

impl RuleSet {
    /// `{X^k I[·], X^k I[·]I[·], I[·]I[·]I[·]}`
    pub fn phi4() -> Self {
        RuleSet {
            name: "phi4".into(),
            shapes: vec![
                Shape { slots: 1, poly: true },
                Shape { slots: 2, poly: true },
                Shape { slots: 3, poly: false },
            ],
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "phi4" => Ok(Self::phi4()),
            _ => Err(Error::Invalid(format!("unknown rule set '{name}'"))),
        }
    }

    fn max_slots(&self) -> usize {
        self.shapes.iter().map(|s| s.slots).max().unwrap_or(1)
    }
}

/// How planted symbols `I[τ]` above γ are handled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Truncation {
    /// Drop every `I[τ]` of order > γ.
    Strict,
    /// Keep `I[τ]` when it can still appear in a product of order ≤ γ,
    /// i.e. `|I[τ]| + (n-1)·m ≤ γ` with `m` the lowest planted order and `n`
    /// the largest slot count of the rule set.
    ProductAware,
}

#[derive(Clone, Debug)]
pub struct GenerateOptions {
    pub kappa: KappaRange,
    pub truncation: Truncation,
    pub max_iter: usize,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions { kappa: KappaRange::default(), truncation: Truncation::ProductAware, max_iter: 64 }
    }
}

/// Norm on T used for coefficient vectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TNorm {
    #[default]
    L1,
    L2,
    Sup,
}

impl TNorm {
    pub fn apply(&self, vals: impl Iterator<Item = f64>) -> f64 {
        match self {
            TNorm::L1 => vals.map(f64::abs).sum(),
            TNorm::L2 => vals.map(|v| v * v).sum::<f64>().sqrt(),
            TNorm::Sup => vals.map(f64::abs).fold(0.0, f64::max),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RegularityStructure {
    pub dimension: usize,
    pub gamma: OrderExpr,
    pub kappa: KappaRange,
    pub rule: RuleSet,
    /// Sorted by order (at κ₀), ties by symbol.
    pub symbols: Vec<(Symbol, OrderExpr)>,
    /// Distinct orders, increasing.
    pub index_set: Vec<OrderExpr>,
    /// Every planted factor `I[τ]` that occurs inside a retained symbol.
    pub planted: Vec<Symbol>,
    /// Lowest order among newly created symbols, per pass.
    pub generation_log: Vec<OrderExpr>,
    set: BTreeSet<Symbol>,
}

pub fn generate_symbols(rule: &RuleSet, d: usize, gamma: OrderExpr, opts: &GenerateOptions) -> Result<RegularityStructure> {
    if !(1..=3).contains(&d) {
        return Err(Error::Invalid(format!("dimension {d} not in 1..=3")));
    }
    let kr = opts.kappa;
    if !gamma.is_positive(&kr)? {
        return Err(Error::Invalid("gamma must be positive".into()));
    }
    let le_gamma = |o: &OrderExpr| o.le_in(&gamma, &kr);
    let ceil = gamma.eval(kr.eval).ceil().to_integer().max(0) as u32;
    let decorations = multi_indices(d, ceil);

    let mut set: BTreeSet<Symbol> = BTreeSet::new();
    set.insert(Symbol::Xi);
    for k in &decorations {
        let p = Symbol::Poly(k.clone());
        if le_gamma(&p.order(d))? {
            set.insert(p);
        }
    }
    let n_max = rule.max_slots() as i64;
    let mut log = Vec::new();
    for iter in 0.. {
        if iter >= opts.max_iter {
            return Err(Error::NonSubcritical(opts.max_iter));
        }
        let candidates: Vec<Symbol> = set.iter().filter(|s| !s.is_poly()).map(|s| Symbol::integ(s.clone())).collect();
        let m = candidates
            .iter()
            .map(|c| c.order(d))
            .min_by(|a, b| a.cmp_at(b, kr.eval))
            .filter(|o| o.eval(kr.eval) < Q::from_integer(0))
            .unwrap_or(OrderExpr::ZERO);
        let mut pl = Vec::new();
        for c in candidates {
            let o = c.order(d);
            let keep = match opts.truncation {
                Truncation::Strict => le_gamma(&o)?,
                Truncation::ProductAware => {
                    let bound = o + OrderExpr::new(m.rational * (n_max - 1), m.kappa * (n_max - 1));
                    le_gamma(&bound)?
                }
            };
            if keep {
                pl.push(c);
            }
        }
        let mut fresh: Vec<Symbol> = Vec::new();
        for shape in &rule.shapes {
            let decs: Vec<&Vec<u32>> =
                if shape.poly { decorations.iter().collect() } else { decorations.iter().take(1).collect() };
            for combo in multisets(pl.len(), shape.slots) {
                let base: Vec<Symbol> = combo.iter().map(|&i| pl[i].clone()).collect();
                for k in &decs {
                    let mut f = base.clone();
                    f.push(Symbol::Poly((*k).clone()));
                    let s = Symbol::product(d, f);
                    if !set.contains(&s) && le_gamma(&s.order(d))? {
                        fresh.push(s);
                    }
                }
            }
        }
        fresh.sort();
        fresh.dedup();
        if fresh.is_empty() {
            break;
        }
        let lowest = fresh.iter().map(|s| s.order(d)).min_by(|a, b| a.cmp_at(b, kr.eval)).unwrap();
        log.push(lowest);
        set.extend(fresh);
    }
    build(rule.clone(), d, gamma, kr, set, log)
}

fn build(
    rule: RuleSet,
    d: usize,
    gamma: OrderExpr,
    kappa: KappaRange,
    set: BTreeSet<Symbol>,
    log: Vec<OrderExpr>,
) -> Result<RegularityStructure> {
    let mut symbols: Vec<(Symbol, OrderExpr)> = set.iter().map(|s| (s.clone(), s.order(d))).collect();
    symbols.sort_by(|a, b| a.1.cmp_at(&b.1, kappa.eval).then_with(|| a.0.cmp(&b.0)));
    let mut index_set: Vec<OrderExpr> = Vec::new();
    for (_, o) in &symbols {
        if index_set.last() != Some(o) {
            index_set.push(*o);
        }
    }
    index_set.dedup_by(|a, b| a.eval(kappa.eval) == b.eval(kappa.eval) && a == b);
    let mut planted = Vec::new();
    for s in &set {
        s.planted_nodes(&mut planted);
    }
    planted.sort();
    planted.dedup();
    Ok(RegularityStructure { dimension: d, gamma, kappa, rule, symbols, index_set, planted, generation_log: log, set })
}

/// Non-decreasing index tuples of length `k` from `0..n`.
fn multisets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

impl RegularityStructure {
    /// The polynomial structure: `{X^k : |k|_s < γ}`.
    pub fn polynomial(d: usize, gamma: OrderExpr) -> Result<Self> {
        let kappa = KappaRange::default();
        let ceil = gamma.eval(kappa.eval).ceil().to_integer().max(0) as u32;
        let mut set = BTreeSet::new();
        for k in multi_indices(d, ceil) {
            let p = Symbol::Poly(k);
            if p.order(d).cmp_in(&gamma, &kappa)? == Ordering::Less {
                set.insert(p);
            }
        }
        build(RuleSet { name: "poly".into(), shapes: vec![] }, d, gamma, kappa, set, vec![])
    }

    pub fn phi4(d: usize, gamma: OrderExpr) -> Result<Self> {
        generate_symbols(&RuleSet::phi4(), d, gamma, &GenerateOptions::default())
    }

    pub fn contains(&self, s: &Symbol) -> bool {
        self.set.contains(s)
    }

    pub fn order_of(&self, s: &Symbol) -> Result<OrderExpr> {
        if self.contains(s) {
            Ok(s.order(self.dimension))
        } else {
            Err(Error::UnknownSymbol(s.to_string()))
        }
    }

    pub fn order_f64(&self, s: &Symbol) -> f64 {
        s.order(self.dimension).to_f64(self.kappa_f64())
    }

    pub fn kappa_f64(&self) -> f64 {
        self.kappa.eval.to_f64().unwrap()
    }

    pub fn gamma_f64(&self) -> f64 {
        self.gamma.to_f64(self.kappa_f64())
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Product truncated to the structure: `None` stands for zero.
    pub fn multiply(&self, a: &Symbol, b: &Symbol) -> Option<Symbol> {
        let p = a.mul(b, self.dimension);
        self.contains(&p).then_some(p)
    }

    pub fn multiply_vec<R: Coeff>(&self, a: &Vector<R>, b: &Vector<R>) -> Vector<R> {
        a.mul_free(b, self.dimension).filter(|s| self.contains(s))
    }

    pub fn project<R: Coeff>(&self, v: &Vector<R>) -> Vector<R> {
        v.filter(|s| self.contains(s))
    }

    pub fn symbols_below(&self, gamma: f64) -> Vec<Symbol> {
        let k = self.kappa_f64();
        self.symbols.iter().filter(|(_, o)| o.to_f64(k) < gamma).map(|(s, _)| s.clone()).collect()
    }

    /// Rows `(symbol_string, rational_part, kappa_coeff)`.
    pub fn table(&self) -> Vec<(String, String, i64)> {
        self.symbols.iter().map(|(s, o)| (s.to_string(), o.rational.to_string(), o.kappa)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::symbol::trees::*;

    fn o(n: i64, d: i64, k: i64) -> OrderExpr {
        OrderExpr::new(Q::new(n, d), k)
    }

    #[test]
    fn phi4_2_is_exactly_five_symbols() {
        let s = RegularityStructure::phi4(2, OrderExpr::rat(1, 10)).unwrap();
        let got: Vec<(Symbol, OrderExpr)> = s.symbols.clone();
        let want = vec![
            (Symbol::Xi, o(-2, 1, -1)),
            (tn(2, 3), o(0, 1, -3)),
            (tn(2, 2), o(0, 1, -2)),
            (t1(), o(0, 1, -1)),
            (Symbol::unit(2), o(0, 1, 0)),
        ];
        assert_eq!(got, want);
    }

    #[test]
    fn phi4_1_has_no_integrated_symbols() {
        let s = RegularityStructure::phi4(1, OrderExpr::rat(1, 10)).unwrap();
        let names: Vec<String> = s.symbols.iter().map(|(s, _)| s.to_string()).collect();
        assert_eq!(names, vec!["Xi", "X(0,0)"]);
    }

    #[test]
    fn strict_truncation_misses_planted_above_gamma() {
        let opts = GenerateOptions { truncation: Truncation::Strict, ..Default::default() };
        let s = generate_symbols(&RuleSet::phi4(), 3, OrderExpr::rat(21, 20), &opts).unwrap();
        assert!(!s.contains(&tab(3, 1, 2)));
        assert!(s.contains(&tab(3, 3, 2)));
        let p = RegularityStructure::phi4(3, OrderExpr::rat(21, 20)).unwrap();
        assert!(p.contains(&tab(3, 1, 2)));
    }

    #[test]
    fn generation_is_monotone() {
        for (d, g) in [(2, OrderExpr::rat(1, 10)), (3, OrderExpr::rat(21, 20)), (2, OrderExpr::rat(3, 2))] {
            let s = RegularityStructure::phi4(d, g).unwrap();
            let k = s.kappa.eval;
            for w in s.generation_log.windows(2) {
                assert!(w[1].eval(k) > w[0].eval(k), "{} then {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn multiply_truncates() {
        let s = RegularityStructure::phi4(3, OrderExpr::rat(21, 20)).unwrap();
        assert_eq!(s.multiply(&t1(), &t1()), Some(tn(3, 2)));
        assert_eq!(s.multiply(&Symbol::unit(3), &tn(3, 3)), Some(tn(3, 3)));
        assert_eq!(s.multiply(&Symbol::x(3, 1), &Symbol::x(3, 2)), None);
        assert_eq!(s.multiply(&tn(3, 3), &tn(3, 3)), None);
    }

    #[test]
    fn polynomial_structure() {
        let s = RegularityStructure::polynomial(1, OrderExpr::int(2)).unwrap();
        // 1, X_1 (degree 2 excluded)
        assert_eq!(s.len(), 2);
    }
}
