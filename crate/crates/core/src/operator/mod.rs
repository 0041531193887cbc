//! Fully nonlinear operators `F(A, p, u, x)` and their second-order jets.
//!
//! Derivatives with respect to `A` use the symmetric-entry convention:
//! `F^{ab}` is the derivative along `E_ab = (e_a e_bᵀ + e_b e_aᵀ)/2`, so that
//! `dF = Σ_ab F^{ab} dA_ab` for symmetric `dA`.

mod builtins;
mod convexity;
mod fd;
mod form;

pub use builtins::{InverseTraceParams, Operator, BUILTIN_OPERATORS, CONVEX_CATALOG};
pub use convexity::{
    adaptive_convexity_search, direct_convexity_check, g_value, ConvexPoint, ConvexityCheck, NeighborhoodSampler, PairSampler, RegionSampler,
};
pub use fd::fd_operator_jet;
pub use form::{
    form_coordinates, form_matrix, form_spectrum, keyco_form, strict_eta, EtaStatus, FormSpectrum, FormVector, StrictEta,
};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::symmat::eigh;
use crate::tensor::{Mat, SymMatrix, Tensor3, Tensor4};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperatorState {
    pub a: SymMatrix,
    pub p: Vec<f64>,
    pub u: f64,
    pub x: Vec<f64>,
}

impl OperatorState {
    pub fn new(a: SymMatrix, p: Vec<f64>, u: f64, x: Vec<f64>) -> Result<Self> {
        let n = a.n();
        if p.len() != n || x.len() != n {
            return Err(Error::input("state dimensions disagree"));
        }
        if !a.is_finite() || !u.is_finite() || p.iter().chain(&x).any(|v| !v.is_finite()) {
            return Err(Error::input("non-finite state entry"));
        }
        Ok(OperatorState { a, p, u, x })
    }

    pub fn n(&self) -> usize {
        self.a.n()
    }
}

/// Value and all first and second partial derivatives of `F` at a state.
///
/// Mixed tensors index the `A` pair first: `fab_p[a][b][r] = F^{ab,p_r}`,
/// `fab_x[a][b][r] = F^{ab,x_r}`, `fpx[a][b] = F^{p_a,x_b}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperatorJet {
    pub f: f64,
    pub fab: SymMatrix,
    pub fp: Vec<f64>,
    pub fu: f64,
    pub fx: Vec<f64>,
    pub fabrs: Tensor4,
    pub fab_p: Tensor3,
    pub fab_u: SymMatrix,
    pub fab_x: Tensor3,
    pub fpp: SymMatrix,
    pub fpu: Vec<f64>,
    pub fpx: Mat,
    pub fuu: f64,
    pub fux: Vec<f64>,
    pub fxx: SymMatrix,
    /// `A⁻¹`, present when `A` is invertible.
    pub ainv: Option<SymMatrix>,
}

impl OperatorJet {
    pub fn zeros(n: usize, f: f64) -> Self {
        OperatorJet {
            f,
            fab: SymMatrix::zeros(n),
            fp: vec![0.0; n],
            fu: 0.0,
            fx: vec![0.0; n],
            fabrs: Tensor4::zeros(n),
            fab_p: Tensor3::zeros(n),
            fab_u: SymMatrix::zeros(n),
            fab_x: Tensor3::zeros(n),
            fpp: SymMatrix::zeros(n),
            fpu: vec![0.0; n],
            fpx: Mat::zeros(n),
            fuu: 0.0,
            fux: vec![0.0; n],
            fxx: SymMatrix::zeros(n),
            ainv: None,
        }
    }

    pub fn n(&self) -> usize {
        self.fab.n()
    }

    /// Smallest eigenvalue of `F^{ab}`; positive iff `F` is elliptic here.
    pub fn ellipticity(&self) -> Result<f64> {
        Ok(eigh(&self.fab)?.eigenvalues[0])
    }

    /// Same jet expressed in the orthonormal frame `R` (columns are the new
    /// basis vectors), with every index rotated.
    pub fn rotated(&self, r: &Mat) -> OperatorJet {
        let rt = |v: &[f64]| r.t_mat_vec(v);
        OperatorJet {
            f: self.f,
            fab: self.fab.conjugate(r),
            fp: rt(&self.fp),
            fu: self.fu,
            fx: rt(&self.fx),
            fabrs: self.fabrs.rotate(r),
            fab_p: self.fab_p.rotate(r),
            fab_u: self.fab_u.conjugate(r),
            fab_x: self.fab_x.rotate(r),
            fpp: self.fpp.conjugate(r),
            fpu: rt(&self.fpu),
            fpx: self.fpx.conjugate(r),
            fuu: self.fuu,
            fux: rt(&self.fux),
            fxx: self.fxx.conjugate(r),
            ainv: self.ainv.as_ref().map(|m| m.conjugate(r)),
        }
    }

    /// Largest entrywise difference to another jet, divided by
    /// `max(1, largest entry of self)`.
    pub fn relative_difference(&self, other: &OperatorJet) -> f64 {
        let a = self.flatten();
        let b = other.flatten();
        let scale = a.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
    }

    fn flatten(&self) -> Vec<f64> {
        let mut v = vec![self.f, self.fu, self.fuu];
        v.extend_from_slice(self.fab.as_slice());
        v.extend_from_slice(&self.fp);
        v.extend_from_slice(&self.fx);
        v.extend_from_slice(self.fabrs.as_slice());
        v.extend_from_slice(self.fab_p.as_slice());
        v.extend_from_slice(self.fab_u.as_slice());
        v.extend_from_slice(self.fab_x.as_slice());
        v.extend_from_slice(self.fpp.as_slice());
        v.extend_from_slice(&self.fpu);
        v.extend_from_slice(self.fpx.as_slice());
        v.extend_from_slice(&self.fux);
        v.extend_from_slice(self.fxx.as_slice());
        v
    }
}

/// Inverse of a positive definite matrix via its spectrum.
pub fn spd_inverse(a: &SymMatrix) -> Result<SymMatrix> {
    let s = eigh(a)?;
    let lmin = s.eigenvalues[0];
    if !(lmin > 1e-14 * a.frobenius_norm().max(1e-300)) {
        return Err(Error::Singular(format!("matrix not positive definite (min eigenvalue {lmin:.3e})")));
    }
    let inv: Vec<f64> = s.eigenvalues.iter().map(|l| 1.0 / l).collect();
    Ok(SymMatrix::diag(&inv).conjugate(&s.frame.transpose()))
}

/// Inverse of an invertible symmetric matrix (not necessarily definite).
pub fn sym_inverse(a: &SymMatrix) -> Result<SymMatrix> {
    let s = eigh(a)?;
    let tol = 1e-13 * s.eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    if s.eigenvalues.iter().any(|l| l.abs() <= tol) {
        return Err(Error::Singular("matrix is singular".into()));
    }
    let inv: Vec<f64> = s.eigenvalues.iter().map(|l| 1.0 / l).collect();
    Ok(SymMatrix::diag(&inv).conjugate(&s.frame.transpose()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_round_trip() {
        let a = SymMatrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let ai = spd_inverse(&a).unwrap();
        let n = 2;
        for i in 0..n {
            for j in 0..n {
                let v: f64 = (0..n).map(|k| a.get(i, k) * ai.get(k, j)).sum();
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
        assert!(spd_inverse(&SymMatrix::diag(&[1.0, -1.0])).is_err());
        assert!(sym_inverse(&SymMatrix::diag(&[1.0, -1.0])).is_ok());
        assert!(sym_inverse(&SymMatrix::diag(&[1.0, 0.0])).is_err());
    }
}
