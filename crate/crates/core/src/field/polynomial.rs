//! Multivariate polynomials in graded-lexicographic monomial order.
//!
//! A polynomial is stored as a dense coefficient list over all monomials of
//! total degree `≤ degree` in the shifted variable `y = x − origin`. Monomials
//! are ordered by total degree, then lexicographically with larger exponents
//! of earlier variables first: for `n = 2` the order is
//! `1, x₁, x₂, x₁², x₁x₂, x₂², x₁³, …`.

use serde::Serialize;

use super::Jet4;
use crate::error::{Error, Result};
use crate::tensor::{SymMatrix, Tensor3, Tensor4};

pub const MAX_DEGREE: usize = 8;

/// All exponent vectors with `|α| ≤ degree`, in graded-lex order.
pub fn monomials(n: usize, degree: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for d in 0..=degree {
        let mut cur = vec![0u32; n];
        compositions(d as u32, 0, &mut cur, &mut out);
    }
    out
}

fn compositions(rest: u32, pos: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    let n = cur.len();
    if pos == n - 1 {
        cur[pos] = rest;
        out.push(cur.clone());
        return;
    }
    for k in (0..=rest).rev() {
        cur[pos] = k;
        compositions(rest - k, pos + 1, cur, out);
    }
    cur[pos] = 0;
}

/// `C(n + d, d)`, the number of monomials of degree `≤ d` in `n` variables.
pub fn monomial_count(n: usize, degree: usize) -> usize {
    let mut c: usize = 1;
    for i in 1..=degree {
        c = c * (n + i) / i;
    }
    c
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Polynomial {
    n: usize,
    degree: usize,
    origin: Vec<f64>,
    #[serde(skip)]
    exps: Vec<Vec<u32>>,
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn zero(n: usize, degree: usize) -> Result<Self> {
        Self::with_coefficients(n, degree, vec![0.0; n], vec![0.0; monomial_count(n, degree)])
    }

    /// Coefficients in graded-lex order for monomials in `x − origin`.
    pub fn with_coefficients(n: usize, degree: usize, origin: Vec<f64>, coeffs: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::input("polynomial needs at least one variable"));
        }
        if degree > MAX_DEGREE {
            return Err(Error::input(format!("degree {degree} exceeds {MAX_DEGREE}")));
        }
        if origin.len() != n {
            return Err(Error::input("origin dimension mismatch"));
        }
        let exps = monomials(n, degree);
        if coeffs.len() != exps.len() {
            return Err(Error::input(format!(
                "expected {} coefficients for n={n}, degree={degree}, got {}",
                exps.len(),
                coeffs.len()
            )));
        }
        if coeffs.iter().chain(&origin).any(|c| !c.is_finite()) {
            return Err(Error::input("non-finite polynomial coefficient"));
        }
        Ok(Polynomial {
            n,
            degree,
            origin,
            exps,
            coeffs,
        })
    }

    /// Builds from sparse `(exponents, coefficient)` terms; repeated exponents add up.
    pub fn from_terms(n: usize, origin: Vec<f64>, terms: &[(Vec<u32>, f64)]) -> Result<Self> {
        let degree = terms
            .iter()
            .map(|(e, _)| e.iter().sum::<u32>() as usize)
            .max()
            .unwrap_or(0);
        let mut p = Self::zero(n, degree)?;
        p.origin = origin;
        if p.origin.len() != n {
            return Err(Error::input("origin dimension mismatch"));
        }
        for (e, c) in terms {
            let i = p.index_of(e)?;
            p.coeffs[i] += c;
        }
        Ok(p)
    }

    /// `Σ c_i (x_i − origin_i)² / 2`.
    pub fn diagonal_quadratic(c: &[f64], origin: Vec<f64>) -> Result<Self> {
        let n = c.len();
        let terms: Vec<(Vec<u32>, f64)> = (0..n)
            .map(|i| {
                let mut e = vec![0; n];
                e[i] = 2;
                (e, 0.5 * c[i])
            })
            .collect();
        let mut p = Self::from_terms(n, origin, &terms)?;
        p.raise_degree(2);
        Ok(p)
    }

    /// `½ (x − origin)ᵀ M (x − origin)`.
    pub fn quadratic_form(m: &SymMatrix, origin: Vec<f64>) -> Result<Self> {
        let n = m.n();
        let mut terms = Vec::new();
        for i in 0..n {
            for j in i..n {
                let mut e = vec![0; n];
                e[i] += 1;
                e[j] += 1;
                let c = if i == j { 0.5 * m.get(i, i) } else { m.get(i, j) };
                terms.push((e, c));
            }
        }
        let mut p = Self::from_terms(n, origin, &terms)?;
        p.raise_degree(2);
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exps
    }

    pub fn index_of(&self, e: &[u32]) -> Result<usize> {
        if e.len() != self.n {
            return Err(Error::input("exponent vector dimension mismatch"));
        }
        self.exps
            .iter()
            .position(|x| x == e)
            .ok_or_else(|| Error::input(format!("monomial {e:?} exceeds degree {}", self.degree)))
    }

    pub fn set_coefficient(&mut self, e: &[u32], c: f64) -> Result<()> {
        let i = self.index_of(e)?;
        self.coeffs[i] = c;
        Ok(())
    }

    pub fn coefficient(&self, e: &[u32]) -> f64 {
        self.index_of(e).map(|i| self.coeffs[i]).unwrap_or(0.0)
    }

    /// Pads the coefficient list so that the polynomial has the given degree.
    pub fn raise_degree(&mut self, degree: usize) {
        if degree <= self.degree {
            return;
        }
        let exps = monomials(self.n, degree);
        let mut coeffs = vec![0.0; exps.len()];
        // Graded order: the old monomials are a prefix of the new list.
        coeffs[..self.coeffs.len()].copy_from_slice(&self.coeffs);
        self.exps = exps;
        self.coeffs = coeffs;
        self.degree = degree;
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut p = self.clone();
        p.coeffs.iter_mut().for_each(|c| *c *= s);
        p
    }

    /// Re-expands around a new origin; exact up to rounding.
    pub fn recentered(&self, new_origin: &[f64]) -> Self {
        if new_origin == self.origin.as_slice() {
            return self.clone();
        }
        // x − old = (x − new) + d
        let d: Vec<f64> = new_origin.iter().zip(&self.origin).map(|(a, b)| a - b).collect();
        let mut out = Polynomial::zero(self.n, self.degree).expect("valid shape");
        out.origin = new_origin.to_vec();
        for (e, &c) in self.exps.iter().zip(&self.coeffs) {
            if c == 0.0 {
                continue;
            }
            // Π_i Σ_k C(e_i,k) y_i^k d_i^(e_i−k)
            let mut partial: Vec<(Vec<u32>, f64)> = vec![(vec![0; self.n], c)];
            for i in 0..self.n {
                let mut next = Vec::new();
                for (pe, pc) in &partial {
                    for k in 0..=e[i] {
                        let w = binomial(e[i], k) * d[i].powi((e[i] - k) as i32);
                        if w == 0.0 {
                            continue;
                        }
                        let mut ne = pe.clone();
                        ne[i] = k;
                        next.push((ne, pc * w));
                    }
                }
                partial = next;
            }
            for (pe, pc) in partial {
                let idx = out.index_of(&pe).expect("degree preserved");
                out.coeffs[idx] += pc;
            }
        }
        out
    }

    /// Sum of two polynomials; `other` is re-expanded around `self`'s origin.
    pub fn add(&self, other: &Polynomial) -> Result<Self> {
        if other.n != self.n {
            return Err(Error::input("dimension mismatch in polynomial sum"));
        }
        let other = other.recentered(&self.origin);
        let mut out = self.clone();
        out.raise_degree(other.degree);
        for (e, c) in other.exps.iter().zip(&other.coeffs) {
            let i = out.index_of(e)?;
            out.coeffs[i] += c;
        }
        Ok(out)
    }

    /// Product of two polynomials; fails if the degree would exceed the cap.
    pub fn mul(&self, other: &Polynomial) -> Result<Self> {
        if other.n != self.n {
            return Err(Error::input("dimension mismatch in polynomial product"));
        }
        let other = other.recentered(&self.origin);
        let degree = self.degree + other.degree;
        let mut out = Polynomial::zero(self.n, degree)?;
        out.origin = self.origin.clone();
        for (ea, &ca) in self.exps.iter().zip(&self.coeffs) {
            if ca == 0.0 {
                continue;
            }
            for (eb, &cb) in other.exps.iter().zip(&other.coeffs) {
                if cb == 0.0 {
                    continue;
                }
                let e: Vec<u32> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                let i = out.index_of(&e)?;
                out.coeffs[i] += ca * cb;
            }
        }
        Ok(out)
    }

    fn powers(&self, x: &[f64]) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| {
                let y = x[i] - self.origin[i];
                let mut p = Vec::with_capacity(self.degree + 1);
                let mut acc = 1.0;
                for _ in 0..=self.degree {
                    p.push(acc);
                    acc *= y;
                }
                p
            })
            .collect()
    }

    /// `∂^β` of the monomial `y^α`, given per-axis power tables.
    #[inline]
    fn monomial_derivative(alpha: &[u32], beta: &[u32], pw: &[Vec<f64>]) -> f64 {
        let mut v = 1.0;
        for i in 0..alpha.len() {
            let (a, b) = (alpha[i], beta[i]);
            if b > a {
                return 0.0;
            }
            let mut f = 1.0;
            for k in 0..b {
                f *= (a - k) as f64;
            }
            v *= f * pw[i][(a - b) as usize];
        }
        v
    }

    fn derivative_at(&self, beta: &[u32], pw: &[Vec<f64>]) -> f64 {
        self.exps
            .iter()
            .zip(&self.coeffs)
            .filter(|(_, &c)| c != 0.0)
            .map(|(e, &c)| c * Self::monomial_derivative(e, beta, pw))
            .sum()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let pw = self.powers(x);
        self.derivative_at(&vec![0; self.n], &pw)
    }

    pub fn hessian(&self, x: &[f64]) -> SymMatrix {
        let pw = self.powers(x);
        let n = self.n;
        SymMatrix::from_fn(n, |a, b| self.derivative_at(&counts(n, &[a, b]), &pw))
    }

    /// Exact derivatives through fourth order.
    pub fn jet4(&self, x: &[f64]) -> Jet4 {
        let n = self.n;
        let pw = self.powers(x);
        let d = |idx: &[usize]| self.derivative_at(&counts(n, idx), &pw);
        let u = d(&[]);
        let du = (0..n).map(|a| d(&[a])).collect();
        let d2u = SymMatrix::from_fn(n, |a, b| d(&[a, b]));
        let mut d3u = Tensor3::zeros(n);
        let mut d4u = Tensor4::zeros(n);
        if self.degree >= 3 {
            for a in 0..n {
                for b in a..n {
                    for c in b..n {
                        d3u.set_sym(a, b, c, d(&[a, b, c]));
                        if self.degree >= 4 {
                            for e in c..n {
                                d4u.set_sym(a, b, c, e, d(&[a, b, c, e]));
                            }
                        }
                    }
                }
            }
        }
        Jet4 {
            x: x.to_vec(),
            u,
            du,
            d2u,
            d3u,
            d4u,
        }
    }
}

fn counts(n: usize, idx: &[usize]) -> Vec<u32> {
    let mut c = vec![0u32; n];
    for &i in idx {
        c[i] += 1;
    }
    c
}

fn binomial(n: u32, k: u32) -> f64 {
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r
}
