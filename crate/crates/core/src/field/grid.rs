use serde::Serialize;

use super::{BoxDomain, Jet4};
use crate::error::{Error, Result};
use crate::tensor::{SymMatrix, Tensor3, Tensor4};

/// Values on a uniform lattice `origin + h·k`, `0 ≤ k_i < dims_i`, stored
/// row-major with the first axis slowest.
///
/// Derivatives are second-order central differences built as tensor products
/// of one-dimensional stencils; their reach is two cells, so full jets are
/// only available two cells away from the lattice boundary. Off-lattice
/// queries are rejected.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridField {
    pub h: f64,
    pub dims: Vec<usize>,
    pub origin: Vec<f64>,
    pub values: Vec<f64>,
}

/// `(offset, weight)` pairs for the `k`-th derivative at unit spacing.
fn stencil(k: u32) -> &'static [(i64, f64)] {
    match k {
        0 => &[(0, 1.0)],
        1 => &[(-1, -0.5), (1, 0.5)],
        2 => &[(-1, 1.0), (0, -2.0), (1, 1.0)],
        3 => &[(-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)],
        4 => &[(-2, 1.0), (-1, -4.0), (0, 6.0), (1, -4.0), (2, 1.0)],
        _ => unreachable!("stencils exist up to fourth order"),
    }
}

impl GridField {
    pub fn new(h: f64, dims: Vec<usize>, origin: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::input("grid spacing must be positive"));
        }
        if dims.is_empty() || dims.len() != origin.len() {
            return Err(Error::input("grid dims/origin dimension mismatch"));
        }
        let len: usize = dims.iter().product();
        if values.len() != len {
            return Err(Error::input(format!("expected {len} grid values, got {}", values.len())));
        }
        if values.iter().chain(&origin).any(|v| !v.is_finite()) {
            return Err(Error::input("non-finite grid value"));
        }
        Ok(GridField {
            h,
            dims,
            origin,
            values,
        })
    }

    /// Samples `f` at the grid points of `domain`. Requires equal spacing on all axes.
    pub fn sample(domain: &BoxDomain, f: impl Fn(&[f64]) -> Result<f64>) -> Result<Self> {
        let h = domain.uniform_spacing()?;
        let values = domain.points().iter().map(|x| f(x)).collect::<Result<Vec<_>>>()?;
        Self::new(h, vec![domain.grid_per_axis; domain.n()], domain.lower_corner(), values)
    }

    pub fn n(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn flat_index(&self, k: &[usize]) -> usize {
        k.iter().zip(&self.dims).fold(0, |acc, (&ki, &d)| acc * d + ki)
    }

    pub fn node(&self, k: &[usize]) -> Vec<f64> {
        k.iter()
            .zip(&self.origin)
            .map(|(&ki, &o)| o + ki as f64 * self.h)
            .collect()
    }

    /// Lattice index of `x`, or an error if `x` is not a lattice point.
    pub fn locate(&self, x: &[f64]) -> Result<Vec<usize>> {
        if x.len() != self.n() {
            return Err(Error::input("point dimension mismatch"));
        }
        let mut k = Vec::with_capacity(x.len());
        for i in 0..x.len() {
            let t = (x[i] - self.origin[i]) / self.h;
            let r = t.round();
            if (t - r).abs() > 1e-7 || r < 0.0 || r as usize >= self.dims[i] {
                return Err(Error::domain(format!("{x:?} is not a lattice point of the grid field")));
            }
            k.push(r as usize);
        }
        Ok(k)
    }

    fn check_reach(&self, k: &[usize], reach: usize) -> Result<()> {
        for (i, (&ki, &d)) in k.iter().zip(&self.dims).enumerate() {
            if ki < reach || ki + reach >= d {
                return Err(Error::domain(format!(
                    "stencil of reach {reach} leaves the grid at index {k:?} (axis {i})"
                )));
            }
        }
        Ok(())
    }

    /// Applies the tensor-product stencil for the derivative whose index
    /// multiset is `idx` at lattice node `k`.
    fn derivative(&self, k: &[usize], idx: &[usize]) -> f64 {
        let n = self.n();
        let mut orders = vec![0u32; n];
        for &i in idx {
            orders[i] += 1;
        }
        let mut acc = 0.0;
        let mut offsets = vec![0i64; n];
        self.accumulate(k, &orders, 0, 1.0, &mut offsets, &mut acc);
        acc / self.h.powi(idx.len() as i32)
    }

    fn accumulate(&self, k: &[usize], orders: &[u32], axis: usize, w: f64, off: &mut Vec<i64>, acc: &mut f64) {
        if axis == orders.len() {
            let node: Vec<usize> = k.iter().zip(off.iter()).map(|(&a, &o)| (a as i64 + o) as usize).collect();
            *acc += w * self.values[self.flat_index(&node)];
            return;
        }
        for &(o, wi) in stencil(orders[axis]) {
            off[axis] = o;
            self.accumulate(k, orders, axis + 1, w * wi, off, acc);
        }
        off[axis] = 0;
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        let k = self.locate(x)?;
        Ok(self.values[self.flat_index(&k)])
    }

    pub fn hessian(&self, x: &[f64]) -> Result<SymMatrix> {
        let k = self.locate(x)?;
        self.check_reach(&k, 1)?;
        Ok(SymMatrix::from_fn(self.n(), |a, b| self.derivative(&k, &[a, b])))
    }

    pub fn jet4(&self, x: &[f64]) -> Result<Jet4> {
        let k = self.locate(x)?;
        self.check_reach(&k, 2)?;
        let n = self.n();
        let d = |idx: &[usize]| self.derivative(&k, idx);
        let mut d3u = Tensor3::zeros(n);
        let mut d4u = Tensor4::zeros(n);
        for a in 0..n {
            for b in a..n {
                for c in b..n {
                    d3u.set_sym(a, b, c, d(&[a, b, c]));
                    for e in c..n {
                        d4u.set_sym(a, b, c, e, d(&[a, b, c, e]));
                    }
                }
            }
        }
        Ok(Jet4 {
            x: self.node(&k),
            u: self.values[self.flat_index(&k)],
            du: (0..n).map(|a| d(&[a])).collect(),
            d2u: SymMatrix::from_fn(n, |a, b| d(&[a, b])),
            d3u,
            d4u,
        })
    }

    /// Box whose grid points are the lattice nodes at least `margin` cells
    /// from the boundary. Requires equal extents on every axis.
    pub fn interior_box(&self, margin: usize) -> Result<BoxDomain> {
        let d0 = self.dims[0];
        if self.dims.iter().any(|&d| d != d0) {
            return Err(Error::input("interior box needs equal grid extents on every axis"));
        }
        if d0 < 2 * margin + 3 {
            return Err(Error::input(format!("grid of {d0} nodes too small for margin {margin}")));
        }
        let m = d0 - 2 * margin;
        let hw = 0.5 * (m - 1) as f64 * self.h;
        let center = self.origin.iter().map(|&o| o + margin as f64 * self.h + hw).collect();
        BoxDomain::new(center, vec![hw; self.n()], m)
    }
}
