//! Hessian rank across a box, null-space tracking and the fixed-direction
//! certificate.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::{try_map_indexed, Execution};
use crate::field::{BoxDomain, ScalarField};
use crate::operator::{Operator, OperatorState};
use crate::symmat::eigh;
use crate::tensor::{Mat, SymMatrix};

/// Default angle tolerance (radians) for declaring null directions fixed.
pub const DEFAULT_THETA_TOL: f64 = 1e-6;

/// `τ_zero = 1e-8 · max(1, largest Hessian eigenvalue over the box)`.
pub fn default_tau_zero(f: &ScalarField, domain: &BoxDomain, exec: Execution) -> Result<f64> {
    let tops = try_map_indexed(exec, domain.len(), |i| {
        let s = eigh(&f.hessian(&domain.point(i))?)?;
        Ok(*s.eigenvalues.last().expect("n ≥ 1"))
    })?;
    Ok(1e-8 * tops.into_iter().fold(1.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankSample {
    pub x: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub rank: usize,
    /// Orthonormal columns spanning the eigenvectors with `λ ≤ τ_zero`.
    pub null_basis: Vec<Vec<f64>>,
}

impl RankSample {
    pub fn nullity(&self) -> usize {
        self.null_basis.len()
    }
}

/// Smallest Hessian eigenvalue over the box and where it occurs (first
/// occurrence in row-major order).
pub fn convexity_scan(f: &ScalarField, domain: &BoxDomain, exec: Execution) -> Result<(f64, Vec<f64>)> {
    let mins = try_map_indexed(exec, domain.len(), |i| Ok(eigh(&f.hessian(&domain.point(i))?)?.eigenvalues[0]))?;
    let (i, m) = mins
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bm), (i, m)| if m < bm { (i, m) } else { (bi, bm) });
    Ok((m, domain.point(i)))
}

/// One sample per grid point, row-major. Refuses non-convex data.
pub fn rank_map(f: &ScalarField, domain: &BoxDomain, tau_zero: f64, exec: Execution) -> Result<Vec<RankSample>> {
    if !(tau_zero > 0.0) {
        return Err(Error::input("tau_zero must be positive"));
    }
    f.validate_box(domain)?;
    let (min_eig, point) = convexity_scan(f, domain, exec)?;
    if min_eig < -tau_zero {
        return Err(Error::NotConvex {
            min_eigenvalue: min_eig,
            point,
        });
    }
    try_map_indexed(exec, domain.len(), |i| {
        let x = domain.point(i);
        let s = eigh(&f.hessian(&x)?)?;
        let k = s.eigenvalues.iter().filter(|&&l| l <= tau_zero).count();
        Ok(RankSample {
            null_basis: (0..k).map(|j| s.eigenvector(j)).collect(),
            rank: s.n() - k,
            eigenvalues: s.eigenvalues,
            x,
        })
    })
}

/// Largest principal angle between two subspaces of equal dimension, from
/// the sine form `σ_max((I − B₀B₀ᵀ)Bᵢ)` (accurate for small angles).
pub fn max_principal_angle(b0: &[Vec<f64>], bi: &[Vec<f64>]) -> Result<f64> {
    if b0.len() != bi.len() {
        return Err(Error::input("principal angles need subspaces of equal dimension"));
    }
    let k = b0.len();
    if k == 0 {
        return Ok(0.0);
    }
    let n = b0[0].len();
    let resid: Vec<Vec<f64>> = bi
        .iter()
        .map(|v| {
            let mut r = v.clone();
            for q in b0 {
                let c: f64 = q.iter().zip(v).map(|(a, b)| a * b).sum();
                for t in 0..n {
                    r[t] -= c * q[t];
                }
            }
            r
        })
        .collect();
    let gram = SymMatrix::from_fn(k, |a, b| resid[a].iter().zip(&resid[b]).map(|(x, y)| x * y).sum());
    let smax = eigh(&gram)?.eigenvalues[k - 1].max(0.0).sqrt();
    Ok(smax.min(1.0).asin())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankVerdict {
    pub constant: bool,
    pub min_rank: usize,
    pub max_rank: usize,
    pub fixed_null_directions: Vec<Vec<f64>>,
    /// Largest angle between each null space and the first sample's; `None`
    /// when the rank is not constant.
    pub max_principal_angle: Option<f64>,
}

pub fn rank_verdict(samples: &[RankSample], theta_tol: f64) -> Result<RankVerdict> {
    let first = samples.first().ok_or_else(|| Error::input("rank verdict needs at least one sample"))?;
    let min_rank = samples.iter().map(|s| s.rank).min().expect("nonempty");
    let max_rank = samples.iter().map(|s| s.rank).max().expect("nonempty");
    let constant = min_rank == max_rank;
    if !constant {
        return Ok(RankVerdict {
            constant,
            min_rank,
            max_rank,
            fixed_null_directions: vec![],
            max_principal_angle: None,
        });
    }
    let mut angle: f64 = 0.0;
    for s in &samples[1..] {
        angle = angle.max(max_principal_angle(&first.null_basis, &s.null_basis)?);
    }
    let k = first.nullity();
    let mut fixed = vec![];
    if k > 0 && angle <= theta_tol {
        let n = first.x.len();
        let mut avg = SymMatrix::zeros(n);
        for s in samples {
            let p = SymMatrix::from_fn(n, |a, b| s.null_basis.iter().map(|v| v[a] * v[b]).sum());
            avg = avg.add(&p);
        }
        let spec = eigh(&avg.scaled(1.0 / samples.len() as f64))?;
        fixed = (n - k..n).rev().map(|j| spec.eigenvector(j)).collect();
    }
    Ok(RankVerdict {
        constant,
        min_rank,
        max_rank,
        fixed_null_directions: fixed,
        max_principal_angle: Some(angle),
    })
}

/// Third-derivative residuals at a point of rank `n − k`, in the eigenframe.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    pub x: Vec<f64>,
    pub k: usize,
    /// `λ_{k+1}`, the smallest positive eigenvalue (`None` when `k = n`).
    pub lambda_gap: Option<f64>,
    /// `max |u_pqi|`, `p, q ≤ k`, all `i`.
    pub residual_a: f64,
    /// `max |u_pqi|`, `i ≤ k`, `p, q > k`.
    pub residual_b: f64,
    /// `|F^{ab} R_ab|` with `R_ab = Σ_{j≤k} u_jjab − 2 Σ_{j≤k<m} u_maj u_mbj / λ_m`.
    pub residual_c: f64,
    /// `max |R_ab|`.
    pub residual_c_matrix: f64,
}

impl CertificateReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.residual_a <= tol && self.residual_b <= tol && self.residual_c <= tol
    }
}

pub fn theorem2_certificate(op: &Operator, f: &ScalarField, x: &[f64], tau_zero: f64) -> Result<CertificateReport> {
    let jet = f.jet4(x)?;
    let n = jet.n();
    let spec = eigh(&jet.d2u)?;
    let lam = &spec.eigenvalues;
    if lam[0] < -tau_zero {
        return Err(Error::precondition(format!("Hessian not convex at {x:?} (λ₁ = {:.3e})", lam[0])));
    }
    let k = lam.iter().filter(|&&l| l <= tau_zero).count();
    let lambda_gap = (k < n).then(|| lam[k]);
    if let Some(g) = lambda_gap {
        if g <= 10.0 * tau_zero {
            return Err(Error::precondition(format!(
                "no rank gap at {x:?}: λ_(k+1) = {g:.3e} ≤ 10·τ_zero"
            )));
        }
    }
    if k == 0 {
        return Ok(CertificateReport {
            x: x.to_vec(),
            k,
            lambda_gap,
            residual_a: 0.0,
            residual_b: 0.0,
            residual_c: 0.0,
            residual_c_matrix: 0.0,
        });
    }
    let v: &Mat = &spec.frame;
    let d3 = jet.d3u.rotate(v);
    let d4 = jet.d4u.rotate(v);
    let mut ra: f64 = 0.0;
    for p in 0..k {
        for q in 0..k {
            for i in 0..n {
                ra = ra.max(d3.get(p, q, i).abs());
            }
        }
    }
    let mut rb: f64 = 0.0;
    for i in 0..k {
        for p in k..n {
            for q in k..n {
                rb = rb.max(d3.get(p, q, i).abs());
            }
        }
    }
    let r = SymMatrix::from_fn(n, |a, b| {
        let mut s = 0.0;
        for j in 0..k {
            s += d4.get(j, j, a, b);
            for m in k..n {
                s -= 2.0 * d3.get(m, a, j) * d3.get(m, b, j) / lam[m];
            }
        }
        s
    });
    let state = OperatorState::new(jet.d2u.clone(), jet.du.clone(), jet.u, jet.x.clone())?;
    let fab = op.jet(&state)?.fab.conjugate(v);
    Ok(CertificateReport {
        x: x.to_vec(),
        k,
        lambda_gap,
        residual_a: ra,
        residual_b: rb,
        residual_c: fab.contract(&r).abs(),
        residual_c_matrix: r.max_abs(),
    })
}
