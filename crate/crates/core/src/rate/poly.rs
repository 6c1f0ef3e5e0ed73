//! Sparse real polynomials in a fixed number of variables.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

pub type Exponent = Vec<u32>;

#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    nvars: usize,
    terms: BTreeMap<Exponent, f64>,
}

impl Poly {
    pub fn zero(nvars: usize) -> Self {
        Self {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(vec![0; nvars], c);
        p
    }

    pub fn monomial(exp: Exponent, c: f64) -> Self {
        let mut p = Self::zero(exp.len());
        p.add_term(exp, c);
        p
    }

    /// `w'z`.
    pub fn linear(w: &DVector<f64>) -> Self {
        let n = w.len();
        let mut p = Self::zero(n);
        for k in 0..n {
            p.add_term(unit(n, k), w[k]);
        }
        p
    }

    /// `z'Qz`.
    pub fn quadratic_form(q: &DMatrix<f64>) -> Self {
        let n = q.nrows();
        let mut p = Self::zero(n);
        for a in 0..n {
            for b in 0..n {
                let mut e = vec![0; n];
                e[a] += 1;
                e[b] += 1;
                p.add_term(e, q[(a, b)]);
            }
        }
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn add_term(&mut self, exp: Exponent, c: f64) {
        assert_eq!(exp.len(), self.nvars, "exponent length");
        if c == 0.0 {
            return;
        }
        *self.terms.entry(exp).or_insert(0.0) += c;
    }

    pub fn coeff(&self, exp: &[u32]) -> f64 {
        self.terms.get(exp).copied().unwrap_or(0.0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponent, &f64)> {
        self.terms.iter()
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .iter()
            .filter(|(_, c)| **c != 0.0)
            .map(|(e, _)| e.iter().sum())
            .max()
            .unwrap_or(0)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(e, c)| (e.clone(), c * s)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), *c);
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.nvars);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let e: Exponent = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, ca * cb);
            }
        }
        out
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                c * e
                    .iter()
                    .zip(z)
                    .map(|(&k, &x)| x.powi(k as i32))
                    .product::<f64>()
            })
            .sum()
    }

    /// Largest coefficient difference over the union of supports.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.sub(other).max_abs_coeff()
    }
}

fn unit(n: usize, k: usize) -> Exponent {
    let mut e = vec![0; n];
    e[k] = 1;
    e
}

/// All exponents of total degree `≤ max_degree`, graded, each degree in
/// lexicographic order with the first variable largest.
pub fn monomials(nvars: usize, max_degree: u32) -> Vec<Exponent> {
    let mut out = Vec::new();
    for d in 0..=max_degree {
        let mut cur = vec![0; nvars];
        fill(&mut out, &mut cur, 0, d);
    }
    out
}

fn fill(out: &mut Vec<Exponent>, cur: &mut Exponent, pos: usize, left: u32) {
    if pos + 1 == cur.len() {
        cur[pos] = left;
        out.push(cur.clone());
        cur[pos] = 0;
        return;
    }
    if cur.is_empty() {
        if left == 0 {
            out.push(Vec::new());
        }
        return;
    }
    for k in (0..=left).rev() {
        cur[pos] = k;
        fill(out, cur, pos + 1, left - k);
    }
    cur[pos] = 0;
}

/// `z'Gz` for a monomial vector `z`.
pub fn gram_poly(basis: &[Exponent], gram: &DMatrix<f64>) -> Poly {
    let n = basis.first().map_or(0, Vec::len);
    let mut p = Poly::zero(n);
    for (a, ea) in basis.iter().enumerate() {
        for (b, eb) in basis.iter().enumerate() {
            let e = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
            p.add_term(e, gram[(a, b)]);
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monomial_counts() {
        assert_eq!(monomials(3, 2).len(), 10);
        assert_eq!(monomials(3, 4).len(), 35);
        assert_eq!(monomials(2, 1), vec![vec![0, 0], vec![1, 0], vec![0, 1]]);
    }

    #[test]
    fn square_of_linear() {
        let w = DVector::from_vec(vec![1.0, -2.0]);
        let l = Poly::linear(&w);
        let sq = l.mul(&l);
        let q = Poly::quadratic_form(&(&w * w.transpose()));
        assert!(sq.max_abs_diff(&q) < 1e-15);
        assert_eq!(sq.coeff(&[1, 1]), -4.0);
        assert!((sq.eval(&[0.5, 1.0]) - 2.25).abs() < 1e-15);
    }

    #[test]
    fn gram_reproduces_square() {
        let basis = monomials(2, 1);
        let c = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let g = &c * c.transpose();
        let p = gram_poly(&basis, &g);
        let z = [0.3, -0.7];
        let lin = 1.0 + 2.0 * z[0] + 3.0 * z[1];
        assert!((p.eval(&z) - lin * lin).abs() < 1e-14);
        assert_eq!(p.degree(), 2);
    }
}
