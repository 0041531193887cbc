use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use super::{fd_operator_jet, spd_inverse, sym_inverse, OperatorJet, OperatorState};
use crate::error::{Error, Result};
use crate::symmat::eigh;
use crate::tensor::{norm, SymMatrix};

pub const BUILTIN_OPERATORS: &[&str] = &[
    "trace_laplace",
    "logdet",
    "example33",
    "korevaar_lewis",
    "inverse_trace_general",
    "neg_trace",
];

/// Builtins that satisfy the structural convexity condition somewhere on
/// their validity region (`neg_trace` is a negative control).
pub const CONVEX_CATALOG: &[&str] = &["trace_laplace", "logdet", "example33", "korevaar_lewis", "inverse_trace_general"];

/// Parameters of `F = −w·(tr A)^(−q) + β|p|²/2 + κu²/2 + σ|x|²/2 + ρ·u·x₁`
/// with `w = 1 + μu + νx₁`.
///
/// For `0 < q < 1` the map `B ↦ −(tr B⁻¹)^(−q)` is convex with positive
/// curvature along `B`, so whether the structural condition holds depends on
/// the state through the `u`-coupling `μ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InverseTraceParams {
    pub q: f64,
    pub mu: f64,
    pub nu: f64,
    pub beta: f64,
    pub kappa: f64,
    pub sigma: f64,
    pub rho: f64,
}

impl Default for InverseTraceParams {
    fn default() -> Self {
        InverseTraceParams {
            q: 0.5,
            mu: 0.3,
            nu: 0.1,
            beta: 1.0,
            kappa: 0.05,
            sigma: 0.05,
            rho: 0.01,
        }
    }
}

type ValueFn = dyn Fn(&OperatorState) -> Result<f64> + Send + Sync;

#[derive(Clone)]
pub enum Operator {
    /// `tr A − c`.
    TraceLaplace { c: f64 },
    /// `log det A − c`, valid for positive definite `A`.
    LogDet { c: f64 },
    /// `|x| − (n−1)/tr A`; solved by `u = |x|`.
    Example33,
    /// `u − 1/tr A`; solved by `u = |x|/√(n−1)`.
    KorevaarLewis,
    InverseTraceGeneral(InverseTraceParams),
    /// `−tr A`: degenerate elliptic in the wrong direction, non-convex.
    NegTrace,
    /// Value-only operator; jets come from finite differences.
    Custom { name: String, f: Arc<ValueFn> },
}

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Operator({}, {:?})", self.name(), self.params())
    }
}

impl Operator {
    pub fn from_name(name: &str, params: &[f64]) -> Result<Self> {
        let arity = |max: usize| -> Result<()> {
            if params.len() > max {
                return Err(Error::input(format!("operator {name} takes at most {max} parameters")));
            }
            if params.iter().any(|p| !p.is_finite()) {
                return Err(Error::input(format!("operator {name}: non-finite parameter")));
            }
            Ok(())
        };
        let first = params.first().copied().unwrap_or(0.0);
        Ok(match name {
            "trace_laplace" => {
                arity(1)?;
                Operator::TraceLaplace { c: first }
            }
            "logdet" => {
                arity(1)?;
                Operator::LogDet { c: first }
            }
            "example33" => {
                arity(0)?;
                Operator::Example33
            }
            "korevaar_lewis" => {
                arity(0)?;
                Operator::KorevaarLewis
            }
            "inverse_trace_general" => {
                arity(7)?;
                match params.len() {
                    0 => Operator::InverseTraceGeneral(InverseTraceParams::default()),
                    7 if params[0] > 0.0 => Operator::InverseTraceGeneral(InverseTraceParams {
                        q: params[0],
                        mu: params[1],
                        nu: params[2],
                        beta: params[3],
                        kappa: params[4],
                        sigma: params[5],
                        rho: params[6],
                    }),
                    7 => return Err(Error::input("inverse_trace_general needs q > 0")),
                    _ => return Err(Error::input("inverse_trace_general takes 0 or 7 parameters")),
                }
            }
            "neg_trace" => {
                arity(0)?;
                Operator::NegTrace
            }
            other => {
                return Err(Error::input(format!(
                    "unknown operator '{other}' (known: {})",
                    BUILTIN_OPERATORS.join(", ")
                )))
            }
        })
    }

    pub fn custom(name: impl Into<String>, f: impl Fn(&OperatorState) -> Result<f64> + Send + Sync + 'static) -> Self {
        Operator::Custom {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Operator::TraceLaplace { .. } => "trace_laplace".into(),
            Operator::LogDet { .. } => "logdet".into(),
            Operator::Example33 => "example33".into(),
            Operator::KorevaarLewis => "korevaar_lewis".into(),
            Operator::InverseTraceGeneral(_) => "inverse_trace_general".into(),
            Operator::NegTrace => "neg_trace".into(),
            Operator::Custom { name, .. } => name.clone(),
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match self {
            Operator::TraceLaplace { c } | Operator::LogDet { c } => vec![*c],
            Operator::InverseTraceGeneral(q) => vec![q.q, q.mu, q.nu, q.beta, q.kappa, q.sigma, q.rho],
            _ => vec![],
        }
    }

    fn positive_trace(s: &OperatorState) -> Result<f64> {
        let t = s.a.trace();
        if t == 0.0 {
            return Err(Error::domain("zero trace"));
        }
        if t < 0.0 {
            return Err(Error::domain(format!("negative trace {t:.6e}")));
        }
        Ok(t)
    }

    /// Checks that `s` lies in the validity region.
    pub fn validate(&self, s: &OperatorState) -> Result<()> {
        match self {
            Operator::TraceLaplace { .. } | Operator::NegTrace | Operator::Custom { .. } => Ok(()),
            Operator::LogDet { .. } => {
                let lmin = eigh(&s.a)?.eigenvalues[0];
                if lmin > 0.0 {
                    Ok(())
                } else {
                    Err(Error::domain(format!("logdet needs positive definite A (min eigenvalue {lmin:.6e})")))
                }
            }
            Operator::Example33 => {
                Self::positive_trace(s)?;
                if norm(&s.x) == 0.0 {
                    return Err(Error::domain("example33 is singular at x = 0"));
                }
                Ok(())
            }
            Operator::KorevaarLewis => Self::positive_trace(s).map(|_| ()),
            Operator::InverseTraceGeneral(q) => {
                Self::positive_trace(s)?;
                let w = 1.0 + q.mu * s.u + q.nu * s.x[0];
                if w > 0.0 {
                    Ok(())
                } else {
                    Err(Error::domain(format!("inverse_trace_general needs w > 0 (w = {w:.6e})")))
                }
            }
        }
    }

    pub fn value(&self, s: &OperatorState) -> Result<f64> {
        self.validate(s)?;
        let n = s.n() as f64;
        Ok(match self {
            Operator::TraceLaplace { c } => s.a.trace() - c,
            Operator::LogDet { c } => eigh(&s.a)?.eigenvalues.iter().map(|l| l.ln()).sum::<f64>() - c,
            Operator::Example33 => norm(&s.x) - (n - 1.0) / s.a.trace(),
            Operator::KorevaarLewis => s.u - 1.0 / s.a.trace(),
            Operator::InverseTraceGeneral(q) => {
                let w = 1.0 + q.mu * s.u + q.nu * s.x[0];
                let p2: f64 = s.p.iter().map(|v| v * v).sum();
                let x2: f64 = s.x.iter().map(|v| v * v).sum();
                -w * s.a.trace().powf(-q.q) + 0.5 * q.beta * p2 + 0.5 * q.kappa * s.u * s.u + 0.5 * q.sigma * x2 + q.rho * s.u * s.x[0]
            }
            Operator::NegTrace => -s.a.trace(),
            Operator::Custom { f, .. } => f(s)?,
        })
    }

    pub fn has_analytic_jet(&self) -> bool {
        !matches!(self, Operator::Custom { .. })
    }

    /// Full jet: analytic for builtins, finite differences otherwise.
    /// `ainv` is filled whenever `A` is invertible.
    pub fn jet(&self, s: &OperatorState) -> Result<OperatorJet> {
        let mut j = match self.analytic_jet(s) {
            Some(j) => j?,
            None => fd_operator_jet(self, s)?,
        };
        if j.ainv.is_none() {
            j.ainv = sym_inverse(&s.a).ok();
        }
        Ok(j)
    }

    pub fn analytic_jet(&self, s: &OperatorState) -> Option<Result<OperatorJet>> {
        if !self.has_analytic_jet() {
            return None;
        }
        Some(self.analytic_jet_inner(s))
    }

    fn analytic_jet_inner(&self, s: &OperatorState) -> Result<OperatorJet> {
        let f = self.value(s)?;
        let n = s.n();
        let nf = n as f64;
        let mut j = OperatorJet::zeros(n, f);
        // Fills `fab = g·I` and `fabrs = h·δ_ab δ_rs`.
        let trace_type = |j: &mut OperatorJet, g: f64, h: f64| {
            j.fab = SymMatrix::identity(n).scaled(g);
            for a in 0..n {
                for r in 0..n {
                    j.fabrs.set(a, a, r, r, h);
                }
            }
        };
        match self {
            Operator::TraceLaplace { .. } => trace_type(&mut j, 1.0, 0.0),
            Operator::NegTrace => trace_type(&mut j, -1.0, 0.0),
            Operator::LogDet { .. } => {
                let ai = spd_inverse(&s.a)?;
                for a in 0..n {
                    for b in 0..n {
                        for r in 0..n {
                            for q in 0..n {
                                let v = -0.5 * (ai.get(a, r) * ai.get(b, q) + ai.get(a, q) * ai.get(b, r));
                                j.fabrs.set(a, b, r, q, v);
                            }
                        }
                    }
                }
                j.fab = ai.clone();
                j.ainv = Some(ai);
            }
            Operator::Example33 => {
                let t = s.a.trace();
                trace_type(&mut j, (nf - 1.0) / (t * t), -2.0 * (nf - 1.0) / (t * t * t));
                let r = norm(&s.x);
                let xh: Vec<f64> = s.x.iter().map(|v| v / r).collect();
                j.fx = xh.clone();
                j.fxx = SymMatrix::from_fn(n, |a, b| ((a == b) as u8 as f64 - xh[a] * xh[b]) / r);
            }
            Operator::KorevaarLewis => {
                let t = s.a.trace();
                trace_type(&mut j, 1.0 / (t * t), -2.0 / (t * t * t));
                j.fu = 1.0;
            }
            Operator::InverseTraceGeneral(q) => {
                let t = s.a.trace();
                let w = 1.0 + q.mu * s.u + q.nu * s.x[0];
                let tq = t.powf(-q.q);
                let d1 = q.q * tq / t;
                trace_type(&mut j, w * d1, -w * d1 * (q.q + 1.0) / t);
                j.fab_u = SymMatrix::identity(n).scaled(q.mu * d1);
                for a in 0..n {
                    j.fab_x.set(a, a, 0, q.nu * d1);
                }
                j.fp = s.p.iter().map(|v| q.beta * v).collect();
                j.fpp = SymMatrix::identity(n).scaled(q.beta);
                j.fu = -q.mu * tq + q.kappa * s.u + q.rho * s.x[0];
                j.fuu = q.kappa;
                j.fux[0] = q.rho;
                j.fx = s.x.iter().map(|v| q.sigma * v).collect();
                j.fx[0] += -q.nu * tq + q.rho * s.u;
                j.fxx = SymMatrix::identity(n).scaled(q.sigma);
            }
            Operator::Custom { .. } => unreachable!("custom operators have no analytic jet"),
        }
        Ok(j)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor4;

    fn state(a: SymMatrix, x: Vec<f64>, u: f64) -> OperatorState {
        let n = a.n();
        OperatorState::new(a, vec![0.0; n], u, x).unwrap()
    }

    #[test]
    fn trace_laplace_jet_is_linear() {
        let op = Operator::from_name("trace_laplace", &[1.0]).unwrap();
        let j = op.jet(&state(SymMatrix::diag(&[1.0, 2.0, 3.0]), vec![0.1; 3], 0.0)).unwrap();
        assert_eq!(j.f, 5.0);
        assert_eq!(j.fab, SymMatrix::identity(3));
        assert_eq!(j.fabrs, Tensor4::zeros(3));
        assert_eq!(j.fxx, SymMatrix::zeros(3));
    }

    #[test]
    fn example33_closed_form() {
        let op = Operator::Example33;
        let a = SymMatrix::diag(&[0.5, 1.0, 0.25]);
        let t = 1.75;
        let x = vec![1.0, 2.0, 2.0];
        let j = op.jet(&state(a, x.clone(), 0.0)).unwrap();
        assert!((j.f - (3.0 - 2.0 / t)).abs() < 1e-15);
        assert!((j.fab.get(1, 1) - 2.0 / (t * t)).abs() < 1e-15);
        assert_eq!(j.fab.get(0, 1), 0.0);
        assert!((j.fabrs.get(0, 0, 2, 2) + 4.0 / (t * t * t)).abs() < 1e-15);
        assert_eq!(j.fabrs.get(0, 1, 0, 1), 0.0);
        let r = 3.0;
        for a in 0..3 {
            for b in 0..3 {
                let want = ((a == b) as u8 as f64 - x[a] * x[b] / 9.0) / r;
                assert!((j.fxx.get(a, b) - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn logdet_second_variation_at_identity() {
        let op = Operator::LogDet { c: 0.0 };
        let j = op.jet(&state(SymMatrix::identity(3), vec![0.0; 3], 0.0)).unwrap();
        assert_eq!(j.fab, SymMatrix::identity(3));
        let x = SymMatrix::from_rows(&[vec![1.0, 2.0, 0.0], vec![2.0, -1.0, 0.5], vec![0.0, 0.5, 3.0]]).unwrap();
        // d²/dt² log det(I + tX) at t = 0 is −tr(X²).
        let tr_x2 = x.contract(&x);
        assert!((j.fabrs.bilinear(&x, &x) + tr_x2).abs() < 1e-13);
    }

    #[test]
    fn validity_errors() {
        let z = state(SymMatrix::diag(&[1.0, -1.0]), vec![1.0, 0.0], 0.0);
        assert!(matches!(Operator::Example33.value(&z), Err(Error::Domain(m)) if m.contains("zero trace")));
        assert!(Operator::LogDet { c: 0.0 }.value(&z).is_err());
        let origin = state(SymMatrix::identity(2), vec![0.0, 0.0], 0.0);
        assert!(Operator::Example33.value(&origin).is_err());
        assert!(Operator::from_name("bogus", &[]).is_err());
        assert!(Operator::from_name("example33", &[1.0]).is_err());
    }

    #[test]
    fn solutions_of_the_inverse_trace_operators() {
        for n in 2..5 {
            let x: Vec<f64> = (0..n).map(|i| 0.3 + i as f64).collect();
            let r = norm(&x);
            let hess = SymMatrix::from_fn(n, |a, b| ((a == b) as u8 as f64 - x[a] * x[b] / (r * r)) / r);
            let s = state(hess.clone(), x.clone(), 0.0);
            assert!(Operator::Example33.value(&s).unwrap().abs() < 1e-14);
            let k = (n as f64 - 1.0).sqrt();
            let s = state(hess.scaled(1.0 / k), x.clone(), r / k);
            assert!(Operator::KorevaarLewis.value(&s).unwrap().abs() < 1e-14);
        }
    }
}
