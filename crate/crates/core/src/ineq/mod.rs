//! `Q^(ℓ)` jets, the twice-differentiated equation, the differential
//! inequality audit and the regularity lemmas behind it.

mod audit;
mod lemmas;

pub use audit::{
    differential_inequality_audit, quantile, AuditConfig, AuditSample, InequalityAudit, RungReport, SlackQuantiles,
    C_GRID,
};
pub use lemmas::{
    dq_bound_audit, dq_bound_from_samples, harnack_audit, ladder_bounded, semiconcavity_audit, semiconcavity_constant,
    DqBoundReport, HarnackReport, QSample, SemiconcavityReport,
};

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::field::{counter_rng, Jet4, ScalarField};
use crate::operator::{Operator, OperatorJet, OperatorState};
use crate::symmat::{d2lambda, dlambda, h_of_matrix, q_ell_values, q_weight, HessianEigenJet};
use crate::tensor::SymMatrix;

/// `Q = Q^(ℓ)` with first and second derivatives at one point, in world
/// coordinates. Derivatives are `None` at masked points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QJet {
    pub x: Vec<f64>,
    pub ell: usize,
    pub q: f64,
    pub dq: Option<Vec<f64>>,
    pub d2q: Option<SymMatrix>,
    /// Some pair of eigenvalues is closer than `δ_gap`.
    pub masked: bool,
    /// Relative difference between the naive and the cancelled second
    /// derivative.
    pub self_check: Option<f64>,
}

impl QJet {
    pub fn dq_norm(&self) -> Option<f64> {
        self.dq.as_ref().map(|v| v.iter().map(|t| t * t).sum::<f64>().sqrt())
    }
}

pub fn q_jet(f: &ScalarField, x: &[f64], ell: usize, delta_gap: Option<f64>) -> Result<QJet> {
    let jet = f.jet4(x)?;
    let ej = HessianEigenJet::new(&jet.d2u, &jet.d3u, &jet.d4u, delta_gap)?;
    q_jet_from_eigen(&ej, x, ell)
}

/// `d2Q` by the cancelled grouping: same-block pairs `j < m < ℓ` combine into
/// `(m − j)/(Λ_j − Λ_m)`, cross-block pairs keep weight `ℓ − j`.
pub fn d2q_cancelled(ej: &HessianEigenJet, ell: usize) -> SymMatrix {
    let n = ej.n();
    let lam = &ej.spectrum.eigenvalues;
    let p3 = &ej.d3;
    SymMatrix::from_fn(n, |a, b| {
        let mut s = 0.0;
        for j in 0..ell {
            s += q_weight(ell, j) * ej.d4.get(j, j, a, b);
            for m in j + 1..ell {
                s += 2.0 * (m - j) as f64 * p3.get(m, a, j) * p3.get(m, b, j) / (lam[j] - lam[m]);
            }
            for m in ell..n {
                s += 2.0 * q_weight(ell, j) * p3.get(m, a, j) * p3.get(m, b, j) / (lam[j] - lam[m]);
            }
        }
        s
    })
}

/// `(dQ, d2Q, self-check)` in frame coordinates.
pub(crate) type FrameDerivatives = (Vec<f64>, SymMatrix, f64);

/// Frame-coordinate `(Q, dQ, d2Q)`, or `None` derivatives when masked.
pub(crate) fn q_frame(ej: &HessianEigenJet, ell: usize) -> Result<(f64, Option<FrameDerivatives>)> {
    let n = ej.n();
    let q = q_ell_values(&ej.spectrum.eigenvalues, ell)?;
    if !ej.all_simple() {
        return Ok((q, None));
    }
    let mut dq = vec![0.0; n];
    let mut naive = SymMatrix::zeros(n);
    for j in 0..ell {
        let w = q_weight(ell, j);
        for (d, g) in dq.iter_mut().zip(dlambda(ej, j)?) {
            *d += w * g;
        }
        naive = naive.add(&d2lambda(ej, j)?.scaled(w));
    }
    let cancelled = d2q_cancelled(ej, ell);
    let check = cancelled.sub(&naive).max_abs() / cancelled.max_abs().max(1.0);
    Ok((q, Some((dq, cancelled, check))))
}

pub fn q_jet_from_eigen(ej: &HessianEigenJet, x: &[f64], ell: usize) -> Result<QJet> {
    let (q, rest) = q_frame(ej, ell)?;
    Ok(match rest {
        None => QJet {
            x: x.to_vec(),
            ell,
            q,
            dq: None,
            d2q: None,
            masked: true,
            self_check: None,
        },
        Some((dq, d2q, check)) => QJet {
            x: x.to_vec(),
            ell,
            q,
            dq: Some(ej.to_world_vector(&dq)),
            d2q: Some(ej.to_world_matrix(&d2q)),
            masked: false,
            self_check: Some(check),
        },
    })
}

/// Operator jet at the state `(D²u, Du, u, x)` of a field jet.
pub fn operator_jet_at(op: &Operator, jet: &Jet4) -> Result<OperatorJet> {
    op.jet(&OperatorState::new(jet.d2u.clone(), jet.du.clone(), jet.u, jet.x.clone())?)
}

/// Second derivative of `x ↦ F(D²u, Du, u, x)` along axis `j`, expanded into
/// its thirteen chain-rule terms. Zero wherever `u` solves `F = 0` on a
/// neighborhood.
pub fn deru_residual(op: &Operator, f: &ScalarField, x: &[f64], j: usize) -> Result<f64> {
    let jet = f.jet4(x)?;
    deru_from_jets(&operator_jet_at(op, &jet)?, &jet, j)
}

pub fn deru_from_jets(fj: &OperatorJet, u: &Jet4, j: usize) -> Result<f64> {
    let n = u.n();
    if j >= n {
        return Err(Error::input(format!("direction {j} out of range 0..{n}")));
    }
    let u3 = |a: usize, b: usize| u.d3u.get(a, b, j);
    let u2 = |a: usize| u.d2u.get(a, j);
    let uj = u.du[j];
    let mut t = [0.0f64; 13];
    for a in 0..n {
        t[1] += fj.fp[a] * u.d3u.get(a, j, j);
        t[9] += 2.0 * fj.fpu[a] * u2(a) * uj;
        t[10] += 2.0 * fj.fpx.get(a, j) * u2(a);
        for b in 0..n {
            t[0] += fj.fab.get(a, b) * u.d4u.get(a, b, j, j);
            t[4] += fj.fpp.get(a, b) * u2(a) * u2(b);
            t[6] += 2.0 * fj.fab_u.get(a, b) * u3(a, b) * uj;
            t[7] += 2.0 * fj.fab_x.get(a, b, j) * u3(a, b);
            for r in 0..n {
                t[8] += 2.0 * fj.fab_p.get(a, b, r) * u3(a, b) * u2(r);
                for s in 0..n {
                    t[3] += fj.fabrs.get(a, b, r, s) * u3(a, b) * u3(r, s);
                }
            }
        }
    }
    t[2] = fj.fu * u.d2u.get(j, j);
    t[5] = fj.fuu * uj * uj;
    t[11] = 2.0 * fj.fux[j] * uj;
    t[12] = fj.fxx.get(j, j);
    Ok(t.iter().sum())
}

/// Largest midpoint concavity violation `(h(A) + h(B))/2 − h((A+B)/2)` of
/// `h = Q^(ℓ)` over random symmetric pairs with entries in `[-1, 1]`.
pub fn h_concavity_check(n: usize, ell: usize, trials: usize, seed: u64, exec: Execution) -> Result<f64> {
    if ell == 0 || ell > n {
        return Err(Error::input(format!("level {ell} out of range 1..={n}")));
    }
    let v = map_indexed(exec, trials, |i| -> Result<f64> {
        let mut rng = counter_rng(seed, i as u64);
        let a = SymMatrix::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let b = SymMatrix::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let mid = a.add(&b).scaled(0.5);
        Ok(0.5 * (h_of_matrix(&a, ell)? + h_of_matrix(&b, ell)?) - h_of_matrix(&mid, ell)?)
    });
    v.into_iter().try_fold(f64::NEG_INFINITY, |m, r| r.map(|x| m.max(x)))
}
