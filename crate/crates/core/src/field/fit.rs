use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use super::{counter_rng, monomials, BoxDomain, Polynomial, ScalarField, MAX_DEGREE};
use crate::error::{Error, Result};
use crate::symmat::eigh;
use crate::tensor::SymMatrix;

/// Sup-norm deviations `max |D^m (P − u)|` over the sample grid, `m = 0..=3`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub degree: usize,
    pub samples: usize,
    /// Points where the reference field supplied a full jet.
    pub jet_points: usize,
    pub deviations: [f64; 4],
    pub condition_number: f64,
}

const RANK_TOL: f64 = 1e-13;

/// Discrete least-squares fit of `f` by a polynomial of total degree
/// `degree` on the grid of `domain`.
///
/// The fit is solved in the scaled variable `t = (x − center)/half_width` and
/// rescaled exactly into monomials of `x − center`.
pub fn fit_polynomial(f: &ScalarField, domain: &BoxDomain, degree: usize) -> Result<(Polynomial, FitReport)> {
    let n = domain.n();
    if degree > MAX_DEGREE {
        return Err(Error::input(format!("fit degree {degree} exceeds {MAX_DEGREE}")));
    }
    if domain.grid_per_axis < degree + 2 {
        return Err(Error::input(format!(
            "fit of degree {degree} needs at least {} samples per axis, box has {}",
            degree + 2,
            domain.grid_per_axis
        )));
    }
    f.validate_box(domain)?;
    let exps = monomials(n, degree);
    let points = domain.points();
    let values = points.iter().map(|x| f.value(x)).collect::<Result<Vec<_>>>()?;

    let design = DMatrix::from_fn(points.len(), exps.len(), |r, c| {
        let x = &points[r];
        exps[c]
            .iter()
            .enumerate()
            .map(|(i, &e)| ((x[i] - domain.center[i]) / domain.half_width[i]).powi(e as i32))
            .product()
    });
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > RANK_TOL * smax) {
        return Err(Error::input(format!(
            "rank-deficient fit (σ_min/σ_max = {:.3e}); increase samples or lower the degree",
            smin / smax
        )));
    }
    let rhs = DVector::from_vec(values);
    let sol = svd
        .solve(&rhs, RANK_TOL * smax)
        .map_err(|e| Error::Singular(e.to_string()))?;
    let coeffs: Vec<f64> = exps
        .iter()
        .zip(sol.iter())
        .map(|(e, &c)| {
            let scale: f64 = e
                .iter()
                .zip(&domain.half_width)
                .map(|(&k, w)| w.powi(k as i32))
                .product();
            c / scale
        })
        .collect();
    let p = Polynomial::with_coefficients(n, degree, domain.center.clone(), coeffs)?;

    let mut deviations = [0.0f64; 4];
    let mut jet_points = 0;
    for x in &points {
        let Ok(uj) = f.jet4(x) else { continue };
        jet_points += 1;
        let pj = p.jet4(x);
        deviations[0] = deviations[0].max((pj.u - uj.u).abs());
        deviations[1] = deviations[1].max(max_diff(&pj.du, &uj.du));
        deviations[2] = deviations[2].max(max_diff(pj.d2u.as_slice(), uj.d2u.as_slice()));
        deviations[3] = deviations[3].max(max_diff(pj.d3u.as_slice(), uj.d3u.as_slice()));
    }
    let report = FitReport {
        degree,
        samples: points.len(),
        jet_points,
        deviations,
        condition_number: smax / smin,
    };
    Ok((p, report))
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbReport {
    pub tau: f64,
    /// Minimum sampled Hessian eigenvalue after the splitting terms.
    pub min_eigenvalue_before_shift: f64,
    /// Whether `τ|x − center|²` was added to restore positivity.
    pub positivity_shift: bool,
    pub min_eigenvalue: f64,
}

/// Splits repeated Hessian eigenvalues and pushes them positive.
///
/// Adds `τ Σ_j w_j (x_j − c_j)²` with distinct weights `w_j = j/(2n)`, plus
/// `τ·½(x − c)ᵀM(x − c)` for a seeded random positive definite `M` with
/// entries in `[-1, 1]`. If the smallest sampled Hessian eigenvalue is still
/// `≤ 0`, `τ|x − c|²` is added as well. `τ = 0` returns `p` unchanged.
pub fn perturb_to_distinct(p: &Polynomial, domain: &BoxDomain, tau: f64, seed: u64) -> Result<(Polynomial, PerturbReport)> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::input("perturbation magnitude must be ≥ 0"));
    }
    let n = p.n();
    if domain.n() != n {
        return Err(Error::input("box and polynomial dimensions differ"));
    }
    let min_eig = |q: &Polynomial| -> Result<f64> {
        let mut m = f64::INFINITY;
        for x in domain.points() {
            m = m.min(eigh(&q.hessian(&x))?.eigenvalues[0]);
        }
        Ok(m)
    };
    if tau == 0.0 {
        let m = min_eig(p)?;
        return Ok((
            p.clone(),
            PerturbReport {
                tau,
                min_eigenvalue_before_shift: m,
                positivity_shift: false,
                min_eigenvalue: m,
            },
        ));
    }
    let c = domain.center.clone();
    let weights: Vec<f64> = (1..=n).map(|j| 2.0 * tau * j as f64 / (2 * n) as f64).collect();
    let split = Polynomial::diagonal_quadratic(&weights, c.clone())?;

    let mut rng = counter_rng(seed, 0);
    let g: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let m = SymMatrix::from_fn(n, |i, j| (0..n).map(|k| g[k * n + i] * g[k * n + j]).sum::<f64>() / n as f64);
    let random = Polynomial::quadratic_form(&m.scaled(tau), c.clone())?;

    let mut out = p.recentered(&c).add(&split)?.add(&random)?;
    let before = min_eig(&out)?;
    let shift = before <= 0.0;
    if shift {
        out = out.add(&Polynomial::diagonal_quadratic(&vec![2.0 * tau; n], c)?)?;
    }
    let after = if shift { min_eig(&out)? } else { before };
    Ok((
        out,
        PerturbReport {
            tau,
            min_eigenvalue_before_shift: before,
            positivity_shift: shift,
            min_eigenvalue: after,
        },
    ))
}

/// Fraction of grid points where the Hessian has `n` distinct positive
/// eigenvalues (adjacent gaps and the smallest eigenvalue above `threshold`).
pub fn distinct_positive_fraction(p: &Polynomial, domain: &BoxDomain, threshold: f64) -> Result<f64> {
    let mut good = 0usize;
    for x in domain.points() {
        let s = eigh(&p.hessian(&x))?;
        if s.gap_min > threshold && s.eigenvalues[0] > threshold {
            good += 1;
        }
    }
    Ok(good as f64 / domain.len() as f64)
}
