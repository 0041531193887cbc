//! Small dense matrices and fully symmetric derivative tensors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Real symmetric matrix. Storage is full row-major; every write goes to both
/// `(i, j)` and `(j, i)` so symmetry holds exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        SymMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diag(&vec![1.0; n])
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    /// Builds from the upper triangle: `f(i, j)` is only called for `i <= j`.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// Builds from explicit rows, rejecting ragged, asymmetric or non-finite input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::input("empty matrix"));
        }
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::input(format!("row {i} has length {} != {n}", row.len())));
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::input(format!("non-finite entry at ({i},{j})")));
                }
                if v != rows[j][i] {
                    return Err(Error::input(format!("asymmetric entry at ({i},{j})")));
                }
                m.data[i * n + j] = v;
            }
        }
        Ok(m)
    }

    /// Symmetrizes an arbitrary square row-major array as `(M + Mᵀ)/2`.
    pub fn symmetrized(n: usize, full: &[f64]) -> Self {
        Self::from_fn(n, |i, j| 0.5 * (full[i * n + j] + full[j * n + i]))
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, s: f64) -> Self {
        SymMatrix {
            n: self.n,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &SymMatrix) -> Self {
        assert_eq!(self.n, other.n);
        SymMatrix {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &SymMatrix) -> Self {
        self.add(&other.scaled(-1.0))
    }

    pub fn mat_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }

    pub fn quad_form(&self, v: &[f64]) -> f64 {
        dot(v, &self.mat_vec(v))
    }

    /// `Σ_ab self_ab · other_ab`.
    pub fn contract(&self, other: &SymMatrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// `Rᵀ · self · R`.
    pub fn conjugate(&self, r: &Mat) -> SymMatrix {
        let n = self.n;
        let mut tmp = vec![0.0; n * n];
        for i in 0..n {
            for b in 0..n {
                tmp[i * n + b] = (0..n).map(|j| self.get(i, j) * r.get(j, b)).sum();
            }
        }
        Self::from_fn(n, |a, b| (0..n).map(|i| r.get(i, a) * tmp[i * n + b]).sum())
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| self.data[i * self.n..(i + 1) * self.n].to_vec())
            .collect()
    }
}

/// Dense square matrix, row-major. Used for orthonormal frames and for mixed
/// derivative blocks that carry no symmetry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    n: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(n: usize) -> Self {
        Mat {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_columns(cols: &[Vec<f64>]) -> Self {
        let n = cols.len();
        let mut m = Self::zeros(n);
        for (j, c) in cols.iter().enumerate() {
            for (i, &v) in c.iter().enumerate() {
                m.set(i, j, v);
            }
        }
        m
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn mul(&self, other: &Mat) -> Mat {
        let n = self.n;
        let mut out = Mat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.set(i, j, (0..n).map(|k| self.get(i, k) * other.get(k, j)).sum());
            }
        }
        out
    }

    pub fn mat_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }

    /// `selfᵀ · v`.
    pub fn t_mat_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self.get(i, j) * v[i]).sum())
            .collect()
    }

    /// `Rᵀ · self · R`.
    pub fn conjugate(&self, r: &Mat) -> Mat {
        r.transpose().mul(self).mul(r)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Third-order tensor with full `n³` storage. Derivative tensors are fully
/// symmetric; mixed operator blocks such as `F^{ab,p_r}` only in `(a,b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor3 {
    n: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(n: usize) -> Self {
        Tensor3 {
            n,
            data: vec![0.0; n * n * n],
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, a: usize, b: usize, c: usize) -> usize {
        (a * self.n + b) * self.n + c
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        self.data[self.idx(a, b, c)]
    }

    #[inline]
    pub fn set(&mut self, a: usize, b: usize, c: usize, v: f64) {
        let i = self.idx(a, b, c);
        self.data[i] = v;
    }

    /// Writes `v` at every permutation of `(a, b, c)`.
    pub fn set_sym(&mut self, a: usize, b: usize, c: usize, v: f64) {
        for (i, j, k) in [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)] {
            self.set(i, j, k, v);
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest deviation from full permutation symmetry.
    pub fn max_asymmetry(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let v = self.get(a, b, c);
                    for w in [self.get(b, a, c), self.get(a, c, b), self.get(c, b, a)] {
                        worst = worst.max((v - w).abs());
                    }
                }
            }
        }
        worst
    }

    /// Change of basis in every slot: `T'_{abc} = Σ R_ia R_jb R_kc T_ijk`.
    pub fn rotate(&self, r: &Mat) -> Tensor3 {
        let n = self.n;
        let mut t = self.data.clone();
        for slot in 0..3 {
            t = mode_product(&t, n, 3, slot, r);
        }
        Tensor3 { n, data: t }
    }

    /// `M_ab = Σ_c T_abc v_c`.
    pub fn contract_last(&self, v: &[f64]) -> Mat {
        let n = self.n;
        let mut m = Mat::zeros(n);
        for a in 0..n {
            for b in 0..n {
                m.set(a, b, (0..n).map(|c| self.get(a, b, c) * v[c]).sum());
            }
        }
        m
    }
}

/// Fourth-order tensor with full `n⁴` storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor4 {
    n: usize,
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(n: usize) -> Self {
        Tensor4 {
            n,
            data: vec![0.0; n * n * n * n],
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, a: usize, b: usize, c: usize, d: usize) -> usize {
        ((a * self.n + b) * self.n + c) * self.n + d
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, c: usize, d: usize) -> f64 {
        self.data[self.idx(a, b, c, d)]
    }

    #[inline]
    pub fn set(&mut self, a: usize, b: usize, c: usize, d: usize, v: f64) {
        let i = self.idx(a, b, c, d);
        self.data[i] = v;
    }

    /// Writes `v` at every permutation of `(a, b, c, d)`.
    pub fn set_sym(&mut self, a: usize, b: usize, c: usize, d: usize, v: f64) {
        let idx = [a, b, c, d];
        for p in PERMS4 {
            self.set(idx[p[0]], idx[p[1]], idx[p[2]], idx[p[3]], v);
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest deviation from full permutation symmetry.
    pub fn max_asymmetry(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        let v = self.get(a, b, c, d);
                        for w in [
                            self.get(b, a, c, d),
                            self.get(a, c, b, d),
                            self.get(a, b, d, c),
                        ] {
                            worst = worst.max((v - w).abs());
                        }
                    }
                }
            }
        }
        worst
    }

    pub fn rotate(&self, r: &Mat) -> Tensor4 {
        let n = self.n;
        let mut t = self.data.clone();
        for slot in 0..4 {
            t = mode_product(&t, n, 4, slot, r);
        }
        Tensor4 { n, data: t }
    }

    /// `Σ_abrs T_abrs X_ab Y_rs`.
    pub fn bilinear(&self, x: &SymMatrix, y: &SymMatrix) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for a in 0..n {
            for b in 0..n {
                let xab = x.get(a, b);
                if xab == 0.0 {
                    continue;
                }
                for r in 0..n {
                    for q in 0..n {
                        s += self.get(a, b, r, q) * xab * y.get(r, q);
                    }
                }
            }
        }
        s
    }
}

const PERMS4: [[usize; 4]; 24] = [
    [0, 1, 2, 3], [0, 1, 3, 2], [0, 2, 1, 3], [0, 2, 3, 1], [0, 3, 1, 2], [0, 3, 2, 1],
    [1, 0, 2, 3], [1, 0, 3, 2], [1, 2, 0, 3], [1, 2, 3, 0], [1, 3, 0, 2], [1, 3, 2, 0],
    [2, 0, 1, 3], [2, 0, 3, 1], [2, 1, 0, 3], [2, 1, 3, 0], [2, 3, 0, 1], [2, 3, 1, 0],
    [3, 0, 1, 2], [3, 0, 2, 1], [3, 1, 0, 2], [3, 1, 2, 0], [3, 2, 0, 1], [3, 2, 1, 0],
];

/// Contracts slot `slot` of an order-`order` tensor with `R`:
/// `T'[.., a, ..] = Σ_i R_ia T[.., i, ..]`.
pub(crate) fn mode_product(t: &[f64], n: usize, order: usize, slot: usize, r: &Mat) -> Vec<f64> {
    let stride = n.pow((order - 1 - slot) as u32);
    let outer = n.pow(slot as u32);
    let mut out = vec![0.0; t.len()];
    for o in 0..outer {
        for a in 0..n {
            for inner in 0..stride {
                let mut s = 0.0;
                for i in 0..n {
                    s += r.get(i, a) * t[(o * n + i) * stride + inner];
                }
                out[(o * n + a) * stride + inner] = s;
            }
        }
    }
    out
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
