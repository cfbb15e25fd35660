//! Sparse polynomial symbols and the exact Weyl (Moyal) product.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::standard_j;

/// Largest total degree a product may produce.
pub const DEGREE_CAP: usize = 40;

/// Polynomial in `nvars` real variables with complex coefficients.
///
/// For flat phase space the variables are `(q_1..q_n, p_1..p_n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolyJson", into = "PolyJson")]
pub struct PolySymbol {
    nvars: usize,
    terms: BTreeMap<Vec<u32>, Complex64>,
}

#[derive(Serialize, Deserialize)]
struct TermJson {
    mi: Vec<u32>,
    re: f64,
    #[serde(default)]
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct PolyJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nvars: Option<usize>,
    terms: Vec<TermJson>,
}

impl TryFrom<PolyJson> for PolySymbol {
    type Error = Error;
    fn try_from(j: PolyJson) -> Result<Self> {
        let nvars = match (j.nvars, j.terms.first()) {
            (Some(n), _) => n,
            (None, Some(t)) => t.mi.len(),
            (None, None) => return Err(Error::InvalidArgument("empty polynomial needs `nvars`".into())),
        };
        let mut p = PolySymbol::zero(nvars);
        for t in j.terms {
            if t.mi.len() != nvars {
                return Err(Error::Dimension { expected: nvars, found: t.mi.len() });
            }
            p.add_term(t.mi, Complex64::new(t.re, t.im));
        }
        Ok(p)
    }
}

impl From<PolySymbol> for PolyJson {
    fn from(p: PolySymbol) -> Self {
        PolyJson {
            nvars: Some(p.nvars),
            terms: p.terms.into_iter().map(|(mi, c)| TermJson { mi, re: c.re, im: c.im }).collect(),
        }
    }
}

impl fmt::Display for PolySymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(mi, c)| {
                let mono: Vec<String> = mi
                    .iter()
                    .enumerate()
                    .filter(|(_, e)| **e > 0)
                    .map(|(i, e)| if *e == 1 { format!("z{i}") } else { format!("z{i}^{e}") })
                    .collect();
                format!("({}{:+}i){}{}", c.re, c.im, if mono.is_empty() { "" } else { "*" }, mono.join("*"))
            })
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

impl PolySymbol {
    pub fn zero(nvars: usize) -> Self {
        PolySymbol { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: Complex64) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(vec![0; nvars], c);
        p
    }

    /// The coordinate function `z_i`.
    pub fn var(nvars: usize, i: usize) -> Self {
        let mut mi = vec![0; nvars];
        mi[i] = 1;
        Self::monomial(mi, Complex64::new(1.0, 0.0))
    }

    pub fn monomial(mi: Vec<u32>, c: Complex64) -> Self {
        let mut p = Self::zero(mi.len());
        p.add_term(mi, c);
        p
    }

    /// Builds a polynomial from `(exponents, coefficient)` pairs.
    pub fn from_terms(nvars: usize, terms: &[(&[u32], Complex64)]) -> Result<Self> {
        let mut p = Self::zero(nvars);
        for (mi, c) in terms {
            if mi.len() != nvars {
                return Err(Error::Dimension { expected: nvars, found: mi.len() });
            }
            p.add_term(mi.to_vec(), *c);
        }
        Ok(p)
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &Complex64)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, mi: &[u32]) -> Complex64 {
        self.terms.get(mi).copied().unwrap_or_default()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add_term(&mut self, mi: Vec<u32>, c: Complex64) {
        if c == Complex64::new(0.0, 0.0) {
            return;
        }
        match self.terms.entry(mi) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if *o.get() == Complex64::new(0.0, 0.0) {
                    o.remove();
                }
            }
        }
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(|mi| mi.iter().sum::<u32>() as usize).max().unwrap_or(0)
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (mi, c) in &other.terms {
            out.add_term(mi.clone(), *c);
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let mut out = Self::zero(self.nvars);
        for (mi, c) in &self.terms {
            out.add_term(mi.clone(), c * s);
        }
        out
    }

    pub fn conj(&self) -> Self {
        let mut out = Self::zero(self.nvars);
        for (mi, c) in &self.terms {
            out.add_term(mi.clone(), c.conj());
        }
        out
    }

    /// Commutative (pointwise) product.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        let d = self.degree() + other.degree();
        if d > DEGREE_CAP {
            return Err(Error::DegreeOverflow { degree: d, cap: DEGREE_CAP });
        }
        let mut out = Self::zero(self.nvars);
        for (a, ca) in &self.terms {
            for (b, cb) in &other.terms {
                let mi: Vec<u32> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                out.add_term(mi, ca * cb);
            }
        }
        Ok(out)
    }

    /// Partial derivative in variable `i`.
    pub fn derivative(&self, i: usize) -> Self {
        let mut out = Self::zero(self.nvars);
        for (mi, c) in &self.terms {
            if mi[i] > 0 {
                let mut m2 = mi.clone();
                m2[i] -= 1;
                out.add_term(m2, c * mi[i] as f64);
            }
        }
        out
    }

    /// Largest coefficient modulus.
    pub fn max_coefficient(&self) -> f64 {
        self.terms.values().fold(0.0, |a, c| a.max(c.norm()))
    }

    /// Drops coefficients with modulus at most `tol`.
    pub fn prune(&self, tol: f64) -> Self {
        let mut out = Self::zero(self.nvars);
        for (mi, c) in &self.terms {
            if c.norm() > tol {
                out.add_term(mi.clone(), *c);
            }
        }
        out
    }

    /// Evaluation at complex arguments.
    pub fn eval_complex(&self, z: &[Complex64]) -> Complex64 {
        let mut s = Complex64::new(0.0, 0.0);
        for (mi, c) in &self.terms {
            let mut t = *c;
            for (zi, e) in z.iter().zip(mi) {
                if *e > 0 {
                    t *= zi.powu(*e);
                }
            }
            s += t;
        }
        s
    }

    pub fn eval(&self, z: &[f64]) -> Complex64 {
        let mut s = Complex64::new(0.0, 0.0);
        for (mi, c) in &self.terms {
            let mut t = 1.0;
            for (zi, e) in z.iter().zip(mi) {
                if *e > 0 {
                    t *= zi.powi(*e as i32);
                }
            }
            s += c * t;
        }
        s
    }

    /// `z -> f(z + shift)`.
    pub fn shifted(&self, shift: &[f64]) -> Result<Self> {
        let mut out = Self::zero(self.nvars);
        for (mi, c) in &self.terms {
            let mut term = Self::constant(self.nvars, *c);
            for (i, e) in mi.iter().enumerate() {
                let lin = Self::var(self.nvars, i).add(&Self::constant(self.nvars, Complex64::new(shift[i], 0.0)));
                for _ in 0..*e {
                    term = term.mul(&lin)?;
                }
            }
            out = out.add(&term);
        }
        Ok(out)
    }
}

/// Bidifferential pieces of the Weyl product of two flat symbols.
///
/// `pieces[k]` is `(1/k!) (-i/2)^k P^k(f, g)` with
/// `P = sum_ab Psi^{ab} d_a (x) d_b` and `Psi = -J`, so that
/// `f * g = sum_k hbar^k pieces[k]`.
pub fn moyal_pieces(f: &PolySymbol, g: &PolySymbol, max_order: usize) -> Result<Vec<PolySymbol>> {
    let nv = f.nvars();
    if nv != g.nvars() || nv % 2 != 0 {
        return Err(Error::Dimension { expected: nv, found: g.nvars() });
    }
    let psi = -standard_j(nv / 2);
    // Current layer of P^k: list of (F, G) pairs already carrying their coefficient.
    let mut layer: Vec<(PolySymbol, PolySymbol)> = vec![(f.clone(), g.clone())];
    let mut pieces = Vec::new();
    let mut factor = Complex64::new(1.0, 0.0);
    for k in 0..=max_order {
        if k > 0 {
            factor *= Complex64::new(0.0, -0.5) / k as f64;
            let mut next = Vec::new();
            for (a, b) in &layer {
                for i in 0..nv {
                    let da = a.derivative(i);
                    if da.is_zero() {
                        continue;
                    }
                    for j in 0..nv {
                        let s = psi[(i, j)];
                        if s == 0.0 {
                            continue;
                        }
                        let db = b.derivative(j);
                        if db.is_zero() {
                            continue;
                        }
                        next.push((da.scale(Complex64::new(s, 0.0)), db));
                    }
                }
            }
            layer = next;
        }
        let mut sum = PolySymbol::zero(nv);
        for (a, b) in &layer {
            sum = sum.add(&a.mul(b)?);
        }
        pieces.push(sum.scale(factor));
        if layer.is_empty() {
            break;
        }
    }
    Ok(pieces)
}

/// Exact Weyl product `f * g` of flat polynomial symbols.
pub fn moyal_poly(f: &PolySymbol, g: &PolySymbol, hbar: f64) -> Result<PolySymbol> {
    let order = f.degree().min(g.degree());
    let pieces = moyal_pieces(f, g, order)?;
    let mut out = PolySymbol::zero(f.nvars());
    let mut h = 1.0;
    for p in pieces {
        out = out.add(&p.scale(Complex64::new(h, 0.0)));
        h *= hbar;
    }
    Ok(out)
}

/// Moyal series truncated after `hbar^order`.
pub fn moyal_truncated(f: &PolySymbol, g: &PolySymbol, hbar: f64, order: usize) -> Result<PolySymbol> {
    let pieces = moyal_pieces(f, g, order)?;
    let mut out = PolySymbol::zero(f.nvars());
    let mut h = 1.0;
    for p in pieces.into_iter().take(order + 1) {
        out = out.add(&p.scale(Complex64::new(h, 0.0)));
        h *= hbar;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn q() -> PolySymbol {
        PolySymbol::var(2, 0)
    }
    fn p() -> PolySymbol {
        PolySymbol::var(2, 1)
    }

    #[test]
    fn heisenberg_relation() {
        let h = 0.37;
        let qp = moyal_poly(&q(), &p(), h).unwrap();
        let pq = moyal_poly(&p(), &q(), h).unwrap();
        assert_eq!(qp.coefficient(&[0, 0]), Complex64::new(0.0, h / 2.0));
        assert_eq!(pq.coefficient(&[0, 0]), Complex64::new(0.0, -h / 2.0));
        let comm = qp.sub(&pq);
        assert_eq!(comm, PolySymbol::constant(2, Complex64::new(0.0, h)));
    }

    #[test]
    fn unity_and_associativity() {
        let f = PolySymbol::from_terms(2, &[(&[2, 1], c(1.5)), (&[0, 3], c(-0.5)), (&[1, 0], c(2.0))]).unwrap();
        let g = PolySymbol::from_terms(2, &[(&[1, 2], c(0.7)), (&[3, 0], c(1.0))]).unwrap();
        let k = PolySymbol::from_terms(2, &[(&[1, 1], c(-1.0)), (&[0, 2], c(0.3))]).unwrap();
        let one = PolySymbol::constant(2, c(1.0));
        assert_eq!(moyal_poly(&f, &one, 0.2).unwrap(), f);
        let h = 0.3;
        let l = moyal_poly(&moyal_poly(&f, &g, h).unwrap(), &k, h).unwrap();
        let r = moyal_poly(&f, &moyal_poly(&g, &k, h).unwrap(), h).unwrap();
        assert!(l.sub(&r).max_coefficient() < 1e-12);
    }

    #[test]
    fn quadratic_products_match_known_symbols() {
        // q^2 * p^2 = q^2 p^2 + 2 i hbar q p - hbar^2 / 2
        let h = 0.1;
        let q2 = q().mul(&q()).unwrap();
        let p2 = p().mul(&p()).unwrap();
        let r = moyal_poly(&q2, &p2, h).unwrap();
        assert_eq!(r.coefficient(&[2, 2]), c(1.0));
        assert!((r.coefficient(&[1, 1]) - Complex64::new(0.0, 2.0 * h)).norm() < 1e-15);
        assert!((r.coefficient(&[0, 0]) - c(-h * h / 2.0)).norm() < 1e-15);
    }

    #[test]
    fn shift_and_json_round_trip() {
        let f = PolySymbol::from_terms(2, &[(&[2, 0], c(1.0)), (&[0, 1], Complex64::new(0.0, 1.0))]).unwrap();
        let s = f.shifted(&[1.0, 2.0]).unwrap();
        let z = [0.3, -0.4];
        assert!((s.eval(&z) - f.eval(&[1.3, 1.6])).norm() < 1e-14);
        let js = serde_json::to_string(&f).unwrap();
        let back: PolySymbol = serde_json::from_str(&js).unwrap();
        assert_eq!(back, f);
        let parsed: PolySymbol = serde_json::from_str(r#"{"terms":[{"mi":[1,0],"re":2.0,"im":0.5}]}"#).unwrap();
        assert_eq!(parsed.coefficient(&[1, 0]), Complex64::new(2.0, 0.5));
    }

    #[test]
    fn degree_cap_is_enforced() {
        let big = PolySymbol::monomial(vec![30, 0], c(1.0));
        assert!(matches!(big.mul(&big), Err(Error::DegreeOverflow { .. })));
    }

    #[test]
    fn coefficient_parity() {
        let f = PolySymbol::from_terms(2, &[(&[3, 1], c(0.4)), (&[1, 2], c(-1.1)), (&[0, 1], c(0.9))]).unwrap();
        let g = PolySymbol::from_terms(2, &[(&[2, 2], c(1.3)), (&[1, 0], c(0.2)), (&[0, 3], c(-0.6))]).unwrap();
        let a = moyal_pieces(&f, &g, 3).unwrap();
        let b = moyal_pieces(&g, &f, 3).unwrap();
        for k in 0..a.len() {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            assert!(a[k].sub(&b[k].scale(c(sign))).max_coefficient() < 1e-14, "order {k}");
        }
    }
}
