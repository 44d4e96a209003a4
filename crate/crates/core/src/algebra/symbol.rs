//! Symbol trees of the graded space T.

use std::fmt;

use super::order::{OrderExpr, Q};
use crate::error::{Error, Result};

/// A basis symbol. Variant order doubles as the canonical sort order of
/// product factors.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Symbol {
    Xi,
    Poly(Vec<u32>),
    Integ(Box<Symbol>),
    Product(Vec<Symbol>),
}

impl Symbol {
    pub fn unit(d: usize) -> Symbol {
        Symbol::Poly(vec![0; d + 1])
    }

    pub fn x(d: usize, j: usize) -> Symbol {
        let mut k = vec![0; d + 1];
        k[j] += 1;
        Symbol::Poly(k)
    }

    pub fn integ(s: Symbol) -> Symbol {
        Symbol::Integ(Box::new(s))
    }

    /// Canonical product: flattens, merges polynomial factors, drops units
    /// and sorts. An empty product yields `unit(d)`.
    pub fn product<I: IntoIterator<Item = Symbol>>(d: usize, items: I) -> Symbol {
        let mut poly = vec![0u32; d + 1];
        let mut rest = Vec::new();
        let mut stack: Vec<Symbol> = items.into_iter().collect();
        while let Some(s) = stack.pop() {
            match s {
                Symbol::Product(ch) => stack.extend(ch),
                Symbol::Poly(k) => {
                    for (a, b) in poly.iter_mut().zip(k) {
                        *a += b;
                    }
                }
                other => rest.push(other),
            }
        }
        if poly.iter().any(|&k| k > 0) {
            rest.push(Symbol::Poly(poly));
        }
        rest.sort();
        match rest.len() {
            0 => Symbol::unit(d),
            1 => rest.pop().unwrap(),
            _ => Symbol::Product(rest),
        }
    }

    pub fn mul(&self, other: &Symbol, d: usize) -> Symbol {
        Symbol::product(d, [self.clone(), other.clone()])
    }

    pub fn is_poly(&self) -> bool {
        matches!(self, Symbol::Poly(_))
    }

    pub fn is_unit(&self) -> bool {
        matches!(self, Symbol::Poly(k) if k.iter().all(|&x| x == 0))
    }

    pub fn factors(&self) -> Vec<&Symbol> {
        match self {
            Symbol::Product(ch) => ch.iter().collect(),
            s => vec![s],
        }
    }

    /// Every `Integ` node occurring anywhere inside the tree.
    pub fn planted_nodes(&self, out: &mut Vec<Symbol>) {
        match self {
            Symbol::Integ(c) => {
                out.push(self.clone());
                c.planted_nodes(out);
            }
            Symbol::Product(ch) => ch.iter().for_each(|c| c.planted_nodes(out)),
            _ => {}
        }
    }

    pub fn order(&self, d: usize) -> OrderExpr {
        match self {
            Symbol::Xi => OrderExpr::new(Q::new(-(d as i64) - 2, 2), -1),
            Symbol::Poly(k) => OrderExpr::int(parabolic_degree(k) as i64),
            Symbol::Integ(c) => c.order(d) + OrderExpr::int(2),
            Symbol::Product(ch) => ch.iter().fold(OrderExpr::ZERO, |acc, c| acc + c.order(d)),
        }
    }

    pub fn parse(s: &str) -> Result<Symbol> {
        let mut p = Parser { s: s.as_bytes(), i: 0 };
        let out = p.symbol()?;
        p.ws();
        if p.i != p.s.len() {
            return Err(Error::Invalid(format!("trailing input in symbol '{s}'")));
        }
        let d = out.dim_hint().unwrap_or(0);
        Ok(out.canonical(d))
    }

    fn dim_hint(&self) -> Option<usize> {
        match self {
            Symbol::Poly(k) => Some(k.len() - 1),
            Symbol::Integ(c) => c.dim_hint(),
            Symbol::Product(ch) => ch.iter().find_map(|c| c.dim_hint()),
            Symbol::Xi => None,
        }
    }

    fn canonical(self, d: usize) -> Symbol {
        match self {
            Symbol::Integ(c) => Symbol::integ(c.canonical(d)),
            Symbol::Product(ch) => Symbol::product(d, ch.into_iter().map(|c| c.canonical(d))),
            s => s,
        }
    }
}

pub fn parabolic_degree(k: &[u32]) -> u32 {
    k.iter().enumerate().map(|(i, &v)| if i == 0 { 2 * v } else { v }).sum()
}

/// All multi-indices over `d+1` components with parabolic degree ≤ `max`.
pub fn multi_indices(d: usize, max: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur = vec![0u32; d + 1];
    fn rec(i: usize, cur: &mut Vec<u32>, budget: u32, out: &mut Vec<Vec<u32>>) {
        if i == cur.len() {
            out.push(cur.clone());
            return;
        }
        let w = if i == 0 { 2 } else { 1 };
        let mut v = 0;
        while v * w <= budget {
            cur[i] = v;
            rec(i + 1, cur, budget - v * w, out);
            v += 1;
        }
        cur[i] = 0;
    }
    rec(0, &mut cur, max, &mut out);
    out.sort_by_key(|k| (parabolic_degree(k), k.clone()));
    out
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Xi => write!(f, "Xi"),
            Symbol::Poly(k) => {
                write!(f, "X(")?;
                for (i, v) in k.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{v}")?;
                }
                write!(f, ")")
            }
            Symbol::Integ(c) => write!(f, "I({c})"),
            Symbol::Product(ch) => {
                write!(f, "P(")?;
                for (i, c) in ch.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{c}")?;
                }
                write!(f, ")")
            }
        }
    }
}

struct Parser<'a> {
    s: &'a [u8],
    i: usize,
}

impl Parser<'_> {
    fn ws(&mut self) {
        while self.i < self.s.len() && self.s[self.i].is_ascii_whitespace() {
            self.i += 1;
        }
    }

    fn err(&self) -> Error {
        Error::Invalid(format!("malformed symbol at byte {}", self.i))
    }

    fn eat(&mut self, tok: &str) -> bool {
        self.ws();
        if self.s[self.i..].starts_with(tok.as_bytes()) {
            self.i += tok.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: &str) -> Result<()> {
        if self.eat(tok) {
            Ok(())
        } else {
            Err(self.err())
        }
    }

    fn symbol(&mut self) -> Result<Symbol> {
        if self.eat("Xi") {
            Ok(Symbol::Xi)
        } else if self.eat("X(") {
            let mut k = Vec::new();
            loop {
                self.ws();
                let st = self.i;
                while self.i < self.s.len() && self.s[self.i].is_ascii_digit() {
                    self.i += 1;
                }
                let txt = std::str::from_utf8(&self.s[st..self.i]).map_err(|_| self.err())?;
                k.push(txt.parse::<u32>().map_err(|_| self.err())?);
                if self.eat(")") {
                    break;
                }
                self.expect(",")?;
            }
            Ok(Symbol::Poly(k))
        } else if self.eat("I(") {
            let c = self.symbol()?;
            self.expect(")")?;
            Ok(Symbol::integ(c))
        } else if self.eat("P(") {
            let mut ch = vec![self.symbol()?];
            while self.eat(",") {
                ch.push(self.symbol()?);
            }
            self.expect(")")?;
            Ok(Symbol::Product(ch))
        } else {
            Err(self.err())
        }
    }
}

/// Named trees in the usual graphical shorthand.
pub mod trees {
    use super::Symbol;

    pub fn t1() -> Symbol {
        Symbol::integ(Symbol::Xi)
    }
    /// `I[Ξ]^n`
    pub fn tn(d: usize, n: usize) -> Symbol {
        Symbol::product(d, std::iter::repeat(t1()).take(n))
    }
    /// `I[I[Ξ]^n]`
    pub fn tn0(d: usize, n: usize) -> Symbol {
        Symbol::integ(tn(d, n))
    }
    /// `I[I[Ξ]^a] · I[Ξ]^b`
    pub fn tab(d: usize, a: usize, b: usize) -> Symbol {
        Symbol::product(d, std::iter::once(tn0(d, a)).chain(std::iter::repeat(t1()).take(b)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_is_canonical() {
        let d = 3;
        let a = Symbol::product(d, [trees::t1(), Symbol::x(d, 1), trees::tn(d, 2)]);
        let b = Symbol::product(d, [Symbol::x(d, 1), trees::tn(d, 3)]);
        assert_eq!(a, b);
        assert_eq!(Symbol::product(d, [trees::t1()]), trees::t1());
        assert_eq!(Symbol::product(d, [Symbol::unit(d), trees::t1()]), trees::t1());
        assert_eq!(Symbol::product(d, []), Symbol::unit(d));
        let xx = Symbol::product(d, [Symbol::x(d, 1), Symbol::x(d, 1)]);
        assert_eq!(xx, Symbol::Poly(vec![0, 2, 0, 0]));
    }

    #[test]
    fn orders() {
        let k = Q::new(1, 100);
        assert_eq!(trees::t1().order(2).eval(k), Q::new(-1, 100));
        let s = Symbol::product(3, [trees::t1(), Symbol::x(3, 2)]);
        assert_eq!(s.order(3), OrderExpr::new(Q::new(1, 2), -1));
        assert_eq!(Symbol::unit(3).order(3), OrderExpr::ZERO);
        assert_eq!(Symbol::Poly(vec![1, 0]).order(1), OrderExpr::int(2));
    }

    #[test]
    fn string_round_trip() {
        let d = 3;
        for s in [trees::tab(d, 3, 2), Symbol::x(d, 1), trees::tn(d, 2), Symbol::Xi] {
            let txt = s.to_string();
            assert_eq!(Symbol::parse(&txt).unwrap(), s, "{txt}");
        }
        assert_eq!(trees::tn(2, 2).to_string(), "P(I(Xi),I(Xi))");
        assert_eq!(Symbol::x(2, 1).to_string(), "X(0,1,0)");
        assert!(Symbol::parse("Q(Xi)").is_err());
    }

    #[test]
    fn multi_index_enumeration() {
        // d=1: degrees ≤ 2 are (0,0),(0,1),(0,2),(1,0)
        assert_eq!(multi_indices(1, 2).len(), 4);
        assert_eq!(multi_indices(3, 1).len(), 4);
    }
}
