use serde::Serialize;

use super::{operator_jet_at, q_frame};
use crate::error::{Error, Result};
use crate::exec::{try_map_indexed, Execution};
use crate::field::{fit_polynomial, perturb_to_distinct, BoxDomain, FitReport, PerturbReport, Polynomial, ScalarField};
use crate::operator::{form_matrix, Operator, OperatorState};
use crate::rank::{default_tau_zero, rank_map};
use crate::symmat::{eigh, q_weight, HessianEigenJet};
use crate::tensor::norm;

/// Candidate constants for `F^{ab}Q_ab ≤ C(|DQ| + Q) + slack`.
pub const C_GRID: [f64; 12] = [0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0, 1024.0];

const MAX_MASKED_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditConfig {
    pub ell: usize,
    /// Ladder rungs pair `degrees[i]` with `taus[i]`.
    pub degrees: Vec<usize>,
    pub taus: Vec<f64>,
    pub seed: u64,
    pub tau_zero: Option<f64>,
    pub delta_gap: Option<f64>,
    /// Largest `|F(D²u, Du, u, x)|` accepted as a solution.
    pub solution_tol: f64,
    pub form_tol: f64,
}

impl AuditConfig {
    pub fn new(ell: usize, degrees: Vec<usize>, taus: Vec<f64>) -> Self {
        AuditConfig {
            ell,
            degrees,
            taus,
            seed: 0,
            tau_zero: None,
            delta_gap: None,
            solution_tol: 1e-6,
            form_tol: 1e-8,
        }
    }
}

/// Per-point record. Derivative quantities are `None` at masked points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditSample {
    pub x: Vec<f64>,
    pub q: f64,
    pub dq_norm: Option<f64>,
    pub trace_term: Option<f64>,
    /// Slack of the fitted inequality at this point.
    pub slack: Option<f64>,
    pub num1_gap: Option<f64>,
    pub num2_gap: Option<f64>,
    /// `|DQ^(m)|` for the lower levels `m = 1..ℓ−1`.
    pub lower_dq: Option<Vec<f64>>,
    /// Twice-differentiated equation evaluated on the perturbed polynomial,
    /// one entry per axis.
    pub deru_residuals: Vec<f64>,
    pub form_min: f64,
    pub self_check: Option<f64>,
    pub masked: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlackQuantiles {
    pub q50: f64,
    pub q90: f64,
    pub q99: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RungReport {
    pub degree: usize,
    pub tau: f64,
    pub fit: FitReport,
    pub perturb: PerturbReport,
    pub fitted_c: f64,
    pub slack: SlackQuantiles,
    pub masked_fraction: f64,
    /// At most 20% of the points are masked.
    pub valid: bool,
    pub min_num1_gap: f64,
    pub min_num2_gap: f64,
    pub max_self_check: f64,
    pub sup_q: f64,
    pub lower_dq_sup: Vec<f64>,
    #[serde(skip)]
    pub polynomial: Polynomial,
    #[serde(skip)]
    pub samples: Vec<AuditSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityAudit {
    pub ell: usize,
    pub k: usize,
    pub max_solution_residual: f64,
    pub rungs: Vec<RungReport>,
    /// 99th-percentile slack is non-increasing along the ladder up to 10%.
    pub monotone_slack: bool,
}

impl InequalityAudit {
    pub fn last(&self) -> &RungReport {
        self.rungs.last().expect("ladder has at least one rung")
    }
}

/// Nearest-rank quantile of unsorted data; `0` for empty data.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let idx = ((p * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
    v[idx]
}

pub fn differential_inequality_audit(
    op: &Operator,
    u: &ScalarField,
    domain: &BoxDomain,
    cfg: &AuditConfig,
    exec: Execution,
) -> Result<InequalityAudit> {
    let n = domain.n();
    if cfg.degrees.is_empty() || cfg.degrees.len() != cfg.taus.len() {
        return Err(Error::input("ladder needs equally many fit degrees and τ values (at least one)"));
    }
    if cfg.ell == 0 || cfg.ell > n {
        return Err(Error::input(format!("level {} out of range 1..={n}", cfg.ell)));
    }
    u.validate_box(domain)?;

    let residuals = try_map_indexed(exec, domain.len(), |i| {
        let x = domain.point(i);
        let j = u.jet4(&x)?;
        op.value(&OperatorState::new(j.d2u, j.du, j.u, x)?).map(f64::abs)
    })?;
    let max_residual = residuals.iter().copied().fold(0.0, f64::max);
    if !(max_residual <= cfg.solution_tol) {
        return Err(Error::precondition(format!(
            "field does not solve {}: max |F| = {max_residual:.3e}",
            op.name()
        )));
    }
    let tau_zero = match cfg.tau_zero {
        Some(t) => t,
        None => default_tau_zero(u, domain, exec)?,
    };
    let max_rank = rank_map(u, domain, tau_zero, exec)?.iter().map(|s| s.rank).max().unwrap_or(0);
    let k = n - max_rank;
    if cfg.ell > k {
        return Err(Error::precondition(format!(
            "level ℓ = {} exceeds the number of vanishing eigenvalues k = {k}",
            cfg.ell
        )));
    }

    let mut rungs = Vec::with_capacity(cfg.degrees.len());
    for (&degree, &tau) in cfg.degrees.iter().zip(&cfg.taus) {
        rungs.push(audit_rung(op, u, domain, cfg, degree, tau, exec)?);
    }
    let monotone_slack = rungs
        .windows(2)
        .all(|w| w[1].slack.q99 <= 1.1 * w[0].slack.q99 + 1e-14);
    Ok(InequalityAudit {
        ell: cfg.ell,
        k,
        max_solution_residual: max_residual,
        rungs,
        monotone_slack,
    })
}

fn audit_rung(
    op: &Operator,
    u: &ScalarField,
    domain: &BoxDomain,
    cfg: &AuditConfig,
    degree: usize,
    tau: f64,
    exec: Execution,
) -> Result<RungReport> {
    let (fitted, fit) = fit_polynomial(u, domain, degree)?;
    let (p, perturb) = perturb_to_distinct(&fitted, domain, tau, cfg.seed)?;
    let mut samples = try_map_indexed(exec, domain.len(), |i| audit_point(op, &p, &domain.point(i), cfg))?;

    if let Some(s) = samples.iter().find(|s| !s.masked && s.form_min < -cfg.form_tol) {
        return Err(Error::precondition(format!(
            "structural form of {} is negative ({:.3e}) at {:?}",
            op.name(),
            s.form_min,
            s.x
        )));
    }
    let live: Vec<(f64, f64)> = samples
        .iter()
        .filter_map(|s| Some((s.trace_term?, s.dq_norm? + s.q)))
        .collect();
    if live.is_empty() {
        return Err(Error::precondition("every sample point is masked"));
    }
    let slack_at = |c: f64| -> Vec<f64> { live.iter().map(|(t, d)| (t - c * d).max(0.0)).collect() };
    let best = quantile(&slack_at(C_GRID[C_GRID.len() - 1]), 0.99);
    let fitted_c = C_GRID
        .iter()
        .copied()
        .find(|&c| quantile(&slack_at(c), 0.99) <= best)
        .unwrap_or(C_GRID[C_GRID.len() - 1]);
    let slack = slack_at(fitted_c);
    for s in samples.iter_mut() {
        if let (Some(t), Some(d)) = (s.trace_term, s.dq_norm) {
            s.slack = Some((t - fitted_c * (d + s.q)).max(0.0));
        }
    }

    let masked = samples.iter().filter(|s| s.masked).count();
    let masked_fraction = masked as f64 / samples.len() as f64;
    let fold_min = |f: fn(&AuditSample) -> Option<f64>| samples.iter().filter_map(f).fold(f64::INFINITY, f64::min);
    let mut lower_dq_sup = vec![0.0; cfg.ell - 1];
    for s in &samples {
        if let Some(l) = &s.lower_dq {
            for (m, v) in lower_dq_sup.iter_mut().zip(l) {
                *m = v.max(*m);
            }
        }
    }
    Ok(RungReport {
        degree,
        tau,
        fit,
        perturb,
        fitted_c,
        slack: SlackQuantiles {
            q50: quantile(&slack, 0.5),
            q90: quantile(&slack, 0.9),
            q99: quantile(&slack, 0.99),
            max: slack.iter().copied().fold(0.0, f64::max),
        },
        masked_fraction,
        valid: masked_fraction <= MAX_MASKED_FRACTION,
        min_num1_gap: fold_min(|s| s.num1_gap),
        min_num2_gap: fold_min(|s| s.num2_gap),
        max_self_check: samples.iter().filter_map(|s| s.self_check).fold(0.0, f64::max),
        sup_q: samples.iter().map(|s| s.q).fold(f64::NEG_INFINITY, f64::max),
        lower_dq_sup,
        polynomial: p,
        samples,
    })
}

fn audit_point(op: &Operator, p: &Polynomial, x: &[f64], cfg: &AuditConfig) -> Result<AuditSample> {
    let n = x.len();
    let ell = cfg.ell;
    let jet = p.jet4(x);
    let ej = HessianEigenJet::new(&jet.d2u, &jet.d3u, &jet.d4u, cfg.delta_gap)?;
    let fj = operator_jet_at(op, &jet)?;
    let form_min = eigh(&form_matrix(&fj)?)?.eigenvalues[0];
    let deru_residuals = (0..n)
        .map(|j| super::deru_from_jets(&fj, &jet, j))
        .collect::<Result<Vec<_>>>()?;
    let (q, rest) = q_frame(&ej, ell)?;
    let mut s = AuditSample {
        x: x.to_vec(),
        q,
        dq_norm: None,
        trace_term: None,
        slack: None,
        num1_gap: None,
        num2_gap: None,
        lower_dq: None,
        deru_residuals,
        form_min,
        self_check: None,
        masked: true,
    };
    let Some((dq, d2q, check)) = rest else {
        return Ok(s);
    };
    let v = &ej.spectrum.frame;
    let fr = fj.rotated(v);
    let lam = &ej.spectrum.eigenvalues;
    let p3 = &ej.d3;
    let g = v.t_mat_vec(&jet.du);
    let quad = |m: usize, j: usize, lo: usize| -> f64 {
        let mut t = 0.0;
        for a in lo..n {
            for b in lo..n {
                t += fr.fab.get(a, b) * p3.get(m, a, j) * p3.get(m, b, j);
            }
        }
        t
    };

    let mut star = 0.0;
    let mut keyco_bound = 0.0;
    let mut gap_bound = 0.0;
    for j in 0..ell {
        let w = q_weight(ell, j);
        let mut br = fr.fuu * g[j] * g[j] + fr.fxx.get(j, j) + 2.0 * fr.fux[j] * g[j];
        for a in ell..n {
            for b in ell..n {
                let pab = p3.get(a, b, j);
                br += 2.0 * fr.fab_u.get(a, b) * pab * g[j] + 2.0 * fr.fab_x.get(a, b, j) * pab;
                for r in ell..n {
                    for t in ell..n {
                        br += fr.fabrs.get(a, b, r, t) * pab * p3.get(r, t, j);
                    }
                }
            }
        }
        star -= w * br;
        for m in ell..n {
            let qm = quad(m, j, ell);
            keyco_bound += 2.0 * w * qm / lam[m];
            gap_bound += 2.0 * w * qm / (lam[m] - lam[j]);
        }
    }

    let c = eigh(&fr.fab)?.eigenvalues[0];
    let mut lhs = 0.0;
    for j in 0..ell {
        for m in j + 1..ell {
            lhs += 2.0 * (m - j) as f64 * quad(m, j, 0) / (lam[m] - lam[j]);
        }
    }
    let mut off = 0.0;
    for i in 0..n {
        for a in 0..ell {
            for b in a + 1..ell {
                off += p3.get(a, b, i).powi(2);
            }
        }
    }
    let rhs = if off == 0.0 { 0.0 } else { c * off / q };

    let lower: Vec<f64> = (1..ell)
        .map(|m| {
            let d: Vec<f64> = (0..n)
                .map(|a| (0..m).map(|j| q_weight(m, j) * p3.get(j, j, a)).sum())
                .collect();
            norm(&d)
        })
        .collect();

    s.masked = false;
    s.dq_norm = Some(norm(&dq));
    s.trace_term = Some(fr.fab.contract(&d2q));
    s.num1_gap = Some((keyco_bound - star).min(gap_bound - keyco_bound));
    s.num2_gap = Some(lhs - rhs);
    s.lower_dq = Some(lower);
    s.self_check = Some(check);
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::builtin_field;

    fn poisson(n: usize) -> (Operator, ScalarField, BoxDomain) {
        (
            Operator::TraceLaplace { c: 1.0 },
            builtin_field("rank1", &[1.0], n).unwrap(),
            BoxDomain::cube(vec![0.0; n], 1.0, 9).unwrap(),
        )
    }

    #[test]
    fn nearest_rank_quantile() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(quantile(&v, 0.99), 99.0);
        assert_eq!(quantile(&v, 1.0), 100.0);
        assert_eq!(quantile(&[3.0], 0.5), 3.0);
        assert_eq!(quantile(&[], 0.5), 0.0);
    }

    #[test]
    fn poisson_rank_one_passes() {
        let (op, u, b) = poisson(2);
        let cfg = AuditConfig::new(1, vec![4, 6], vec![1e-3, 1e-4]);
        let a = differential_inequality_audit(&op, &u, &b, &cfg, Execution::Parallel).unwrap();
        assert_eq!(a.k, 1);
        let r = a.last();
        assert!(r.valid && r.masked_fraction < 0.05);
        assert!(r.slack.q99 <= 1e-6 && r.fitted_c <= 10.0);
        assert!(r.min_num1_gap >= -1e-8 && r.min_num2_gap >= -1e-8);
        assert!(a.monotone_slack);
    }

    #[test]
    fn full_rank_field_is_refused() {
        let op = Operator::LogDet { c: 0.0 };
        let u = builtin_field("quadratic", &[1.0, 1.0], 2).unwrap();
        let b = BoxDomain::cube(vec![0.0; 2], 1.0, 9).unwrap();
        let e = differential_inequality_audit(&op, &u, &b, &AuditConfig::new(1, vec![4], vec![1e-3]), Execution::Sequential)
            .unwrap_err();
        assert!(matches!(e, Error::Precondition(m) if m.contains("k = 0")));
    }

    #[test]
    fn non_solution_is_refused() {
        let (_, u, b) = poisson(2);
        let op = Operator::TraceLaplace { c: 1.5 };
        let e = differential_inequality_audit(&op, &u, &b, &AuditConfig::new(1, vec![4], vec![1e-3]), Execution::Sequential)
            .unwrap_err();
        assert!(matches!(e, Error::Precondition(m) if m.contains("does not solve")));
    }

    #[test]
    fn negative_form_is_refused() {
        let u = builtin_field("rank1", &[1.0], 2).unwrap();
        let b = BoxDomain::cube(vec![0.0; 2], 1.0, 9).unwrap();
        let op = Operator::custom("neg_trace_shifted", |s| Ok(1.0 - s.a.trace()));
        let e = differential_inequality_audit(&op, &u, &b, &AuditConfig::new(1, vec![4], vec![1e-3]), Execution::Sequential)
            .unwrap_err();
        assert!(matches!(&e, Error::Precondition(m) if m.contains("negative")), "{e}");
    }

    #[test]
    fn num1_and_num2_hold_for_curved_data() {
        // Not a solution, so the pipeline would refuse it; the pointwise
        // inequalities only need convex operators and positive spectra.
        let p = match builtin_field("convex_poly", &[5.0, 4.0], 3).unwrap() {
            ScalarField::Polynomial(p) => p,
            _ => unreachable!(),
        };
        let b = BoxDomain::cube(vec![0.0; 3], 0.8, 5).unwrap();
        for op in [
            Operator::TraceLaplace { c: 0.0 },
            Operator::LogDet { c: 0.0 },
            Operator::Example33,
            Operator::KorevaarLewis,
        ] {
            for ell in 1..=3 {
                let cfg = AuditConfig::new(ell, vec![4], vec![0.0]);
                for i in 0..b.len() {
                    let x = b.point(i);
                    if matches!(op, Operator::Example33) && norm(&x) < 1e-9 {
                        continue;
                    }
                    let s = audit_point(&op, &p, &x, &cfg).unwrap();
                    if s.masked {
                        continue;
                    }
                    assert!(s.num1_gap.unwrap() >= -1e-8, "{op:?} ℓ={ell} {:?}", s.num1_gap);
                    assert!(s.num2_gap.unwrap() >= -1e-8, "{op:?} ℓ={ell} {:?}", s.num2_gap);
                }
            }
        }
    }
}
