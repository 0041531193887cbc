//! Finite-difference Newton solver for `F(D²u, Du, u, x) = 0` on a box with
//! Dirichlet data.
//!
//! Second-order central differences: three-point stencils on the diagonal of
//! the Hessian and for the gradient, the four-point cross stencil for mixed
//! derivatives. Unknowns are the interior nodes in row-major order.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::{try_map_indexed, Execution};
use crate::field::{BoxDomain, GridField};
use crate::operator::{Operator, OperatorState};
use crate::tensor::SymMatrix;

pub const MAX_GRID_PER_AXIS: usize = 64;
const MAX_HALVINGS: usize = 30;

pub struct DiscreteProblem {
    pub op: Operator,
    pub domain: BoxDomain,
    /// Dirichlet values, one per node; only boundary entries are used.
    pub boundary: Vec<f64>,
    interior: Vec<usize>,
    unknown_of: Vec<Option<usize>>,
}

impl DiscreteProblem {
    pub fn new(op: Operator, domain: BoxDomain, boundary: impl Fn(&[f64]) -> Result<f64>) -> Result<Self> {
        let n = domain.n();
        if !(1..=3).contains(&n) {
            return Err(Error::input(format!("solver supports n ∈ {{1, 2, 3}}, got {n}")));
        }
        let g = domain.grid_per_axis;
        if !(3..=MAX_GRID_PER_AXIS).contains(&g) {
            return Err(Error::input(format!("solver needs 3..={MAX_GRID_PER_AXIS} points per axis, got {g}")));
        }
        let mut interior = vec![];
        let mut unknown_of = vec![None; domain.len()];
        let mut values = vec![0.0; domain.len()];
        for i in 0..domain.len() {
            let k = domain.multi_index(i);
            if k.iter().all(|&t| t > 0 && t + 1 < g) {
                unknown_of[i] = Some(interior.len());
                interior.push(i);
            } else {
                let v = boundary(&domain.point(i))?;
                if !v.is_finite() {
                    return Err(Error::input(format!("boundary value at node {i} is not finite")));
                }
                values[i] = v;
            }
        }
        Ok(DiscreteProblem {
            op,
            domain,
            boundary: values,
            interior,
            unknown_of,
        })
    }

    pub fn unknowns(&self) -> usize {
        self.interior.len()
    }

    /// Node values of `f`, with the boundary entries replaced by the Dirichlet data.
    pub fn sample(&self, f: impl Fn(&[f64]) -> Result<f64>) -> Result<Vec<f64>> {
        (0..self.domain.len())
            .map(|i| match self.unknown_of[i] {
                Some(_) => f(&self.domain.point(i)),
                None => Ok(self.boundary[i]),
            })
            .collect()
    }

    fn stride(&self, axis: usize) -> usize {
        self.domain.grid_per_axis.pow((self.domain.n() - 1 - axis) as u32)
    }

    /// Discrete `(D²u, Du)` at interior node `i`.
    fn stencil_state(&self, u: &[f64], i: usize) -> Result<OperatorState> {
        let n = self.domain.n();
        let h: Vec<f64> = (0..n).map(|a| self.domain.spacing(a)).collect();
        let s: Vec<usize> = (0..n).map(|a| self.stride(a)).collect();
        let mut a = SymMatrix::zeros(n);
        let mut p = vec![0.0; n];
        for x in 0..n {
            a.set(x, x, (u[i + s[x]] - 2.0 * u[i] + u[i - s[x]]) / (h[x] * h[x]));
            p[x] = (u[i + s[x]] - u[i - s[x]]) / (2.0 * h[x]);
            for y in x + 1..n {
                let c = u[i + s[x] + s[y]] - u[i + s[x] - s[y]] - u[i - s[x] + s[y]] + u[i - s[x] - s[y]];
                a.set(x, y, c / (4.0 * h[x] * h[y]));
            }
        }
        OperatorState::new(a, p, u[i], self.domain.point(i))
    }

    fn check_len(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.domain.len() {
            return Err(Error::input(format!("expected {} node values, got {}", self.domain.len(), u.len())));
        }
        Ok(())
    }

    fn at_node<T>(&self, i: usize, r: Result<T>) -> Result<T> {
        r.map_err(|e| match e {
            Error::Domain(m) => Error::Domain(format!("node {i}: {m}")),
            other => other,
        })
    }

    /// Residual at every interior node.
    pub fn residual(&self, u: &[f64], exec: Execution) -> Result<Vec<f64>> {
        self.check_len(u)?;
        try_map_indexed(exec, self.unknowns(), |k| {
            let i = self.interior[k];
            self.at_node(i, self.stencil_state(u, i).and_then(|s| self.op.value(&s)))
        })
    }

    /// Residual and its Jacobian with respect to the interior unknowns.
    pub fn assemble_residual(&self, u: &[f64], exec: Execution) -> Result<(Vec<f64>, SparseMatrix)> {
        self.check_len(u)?;
        let n = self.domain.n();
        let h: Vec<f64> = (0..n).map(|a| self.domain.spacing(a)).collect();
        let s: Vec<usize> = (0..n).map(|a| self.stride(a)).collect();
        let rows = try_map_indexed(exec, self.unknowns(), |k| {
            let i = self.interior[k];
            let state = self.at_node(i, self.stencil_state(u, i))?;
            let j = self.at_node(i, self.op.jet(&state))?;
            let mut entries: Vec<(usize, f64)> = vec![];
            let mut push = |node: usize, v: f64| {
                if let Some(c) = self.unknown_of[node] {
                    entries.push((c, v));
                }
            };
            let mut center = j.fu;
            for x in 0..n {
                let faa = j.fab.get(x, x) / (h[x] * h[x]);
                center -= 2.0 * faa;
                let fp = j.fp[x] / (2.0 * h[x]);
                push(i + s[x], faa + fp);
                push(i - s[x], faa - fp);
                for y in x + 1..n {
                    let w = 2.0 * j.fab.get(x, y) / (4.0 * h[x] * h[y]);
                    push(i + s[x] + s[y], w);
                    push(i - s[x] - s[y], w);
                    push(i + s[x] - s[y], -w);
                    push(i - s[x] + s[y], -w);
                }
            }
            push(i, center);
            entries.sort_by_key(|e| e.0);
            Ok((j.f, entries))
        })?;
        let (r, rows): (Vec<f64>, Vec<Vec<(usize, f64)>>) = rows.into_iter().unzip();
        Ok((
            r,
            SparseMatrix {
                cols: self.unknowns(),
                rows,
            },
        ))
    }

    fn with_unknowns(&self, u: &[f64], delta: &[f64], step: f64) -> Vec<f64> {
        let mut v = u.to_vec();
        for (k, &i) in self.interior.iter().enumerate() {
            v[i] += step * delta[k];
        }
        v
    }
}

/// Row-compressed matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub cols: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl SparseMatrix {
    pub fn mat_vec(&self, v: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().map(|&(c, a)| a * v[c]).sum()).collect()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// `(lower, upper)` bandwidths.
    pub fn bandwidths(&self) -> (usize, usize) {
        let mut kl = 0;
        let mut ku = 0;
        for (i, r) in self.rows.iter().enumerate() {
            for &(c, _) in r {
                if c < i {
                    kl = kl.max(i - c);
                } else {
                    ku = ku.max(c - i);
                }
            }
        }
        (kl, ku)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.cols]; self.rows.len()];
        for (i, r) in self.rows.iter().enumerate() {
            for &(c, a) in r {
                d[i][c] += a;
            }
        }
        d
    }
}

/// Band storage with room for the fill produced by partial pivoting: row `i`
/// holds columns `i − kl ..= i + kl + ku`.
struct Band {
    kl: usize,
    width: usize,
    data: Vec<f64>,
}

impl Band {
    fn from_sparse(a: &SparseMatrix) -> Self {
        let (kl, ku) = a.bandwidths();
        let n = a.rows.len();
        let width = 2 * kl + ku + 1;
        let mut b = Band {
            kl,
            width,
            data: vec![0.0; n * width],
        };
        for (i, r) in a.rows.iter().enumerate() {
            for &(c, v) in r {
                *b.at(i, c) += v;
            }
        }
        b
    }

    #[inline]
    fn at(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[i * self.width + (j + self.kl - i)]
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + (j + self.kl - i)]
    }
}

/// Solves `A x = b` by banded Gaussian elimination with partial pivoting.
pub fn solve_banded(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows.len();
    if a.cols != n || b.len() != n {
        return Err(Error::input("banded solve needs a square system"));
    }
    let mut m = Band::from_sparse(a);
    let kl = m.kl;
    let reach = m.width - 1 - kl;
    let mut x = b.to_vec();
    let scale = m.data.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    for k in 0..n {
        let last = (k + kl).min(n - 1);
        let p = (k..=last)
            .max_by(|&i, &j| m.get(i, k).abs().total_cmp(&m.get(j, k).abs()))
            .expect("nonempty range");
        let piv = m.get(p, k);
        if !(piv.abs() > 1e-14 * scale) {
            return Err(Error::Singular(format!("zero pivot in column {k}")));
        }
        let right = (k + reach).min(n - 1);
        if p != k {
            for j in k..=right {
                let t = m.get(k, j);
                *m.at(k, j) = m.get(p, j);
                *m.at(p, j) = t;
            }
            x.swap(k, p);
        }
        for i in k + 1..=last {
            let l = m.get(i, k) / piv;
            if l == 0.0 {
                continue;
            }
            for j in k + 1..=right {
                let v = m.get(k, j);
                *m.at(i, j) -= l * v;
            }
            x[i] -= l * x[k];
        }
    }
    for k in (0..n).rev() {
        let right = (k + reach).min(n - 1);
        let mut s = x[k];
        for j in k + 1..=right {
            s -= m.get(k, j) * x[j];
        }
        x[k] = s / m.get(k, k);
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NewtonOptions {
    /// Initial step length of every line search.
    pub damping: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            damping: 1.0,
            max_iter: 50,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NewtonTrace {
    /// `‖residual‖_∞` before each iteration and after the last one.
    pub residuals: Vec<f64>,
    /// Accepted step lengths.
    pub steps: Vec<f64>,
    pub iterations: usize,
    pub final_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NewtonSolution {
    pub field: GridField,
    pub trace: NewtonTrace,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn newton_solve(prob: &DiscreteProblem, guess: &[f64], opts: NewtonOptions, exec: Execution) -> Result<NewtonSolution> {
    prob.check_len(guess)?;
    if !(opts.damping > 0.0 && opts.damping <= 1.0) || !(opts.tol > 0.0) {
        return Err(Error::input("damping must lie in (0, 1] and tol must be positive"));
    }
    let h = prob.domain.uniform_spacing()?;
    let mut u = prob.sample(|_| Ok(0.0))?;
    for &i in &prob.interior {
        u[i] = guess[i];
    }
    let mut residuals = vec![];
    let mut steps = vec![];
    let (mut r, mut jac) = prob.assemble_residual(&u, exec)?;
    let mut norm = inf_norm(&r);
    residuals.push(norm);
    let mut it = 0;
    while norm > opts.tol {
        if it == opts.max_iter {
            return Err(Error::Divergence(format!(
                "no convergence in {} iterations (residual {norm:.3e})",
                opts.max_iter
            )));
        }
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let delta = solve_banded(&jac, &rhs)?;
        let mut step = opts.damping;
        let mut accepted = None;
        let mut invalid = 0;
        for _ in 0..=MAX_HALVINGS {
            let cand = prob.with_unknowns(&u, &delta, step);
            match prob.residual(&cand, exec) {
                Ok(rc) if inf_norm(&rc) < norm => {
                    accepted = Some(cand);
                    break;
                }
                Ok(_) => {}
                Err(Error::Domain(_)) => invalid += 1,
                Err(e) => return Err(e),
            }
            step *= 0.5;
        }
        let Some(next) = accepted else {
            return Err(if invalid == MAX_HALVINGS + 1 {
                Error::Domain(format!("iteration {it}: every shortened step leaves the validity region"))
            } else {
                Error::Divergence(format!("iteration {it}: residual did not decrease after {MAX_HALVINGS} halvings"))
            });
        };
        u = next;
        steps.push(step);
        (r, jac) = prob.assemble_residual(&u, exec)?;
        norm = inf_norm(&r);
        residuals.push(norm);
        it += 1;
    }
    let d = &prob.domain;
    Ok(NewtonSolution {
        field: GridField::new(h, vec![d.grid_per_axis; d.n()], d.lower_corner(), u)?,
        trace: NewtonTrace {
            residuals,
            steps,
            iterations: it,
            final_residual: norm,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::counter_rng;
    use rand::Rng;

    fn sq(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    #[test]
    fn banded_solve_matches_dense() {
        let n: usize = 12;
        let mut rng = counter_rng(3, 0);
        let rows: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|i| {
                (i.saturating_sub(2)..(i + 3).min(n))
                    .map(|j| (j, rng.gen_range(-1.0..1.0)))
                    .collect()
            })
            .collect();
        let a = SparseMatrix { cols: n, rows };
        let x: Vec<f64> = (0..n).map(|i| i as f64 - 3.5).collect();
        let b = a.mat_vec(&x);
        let y = solve_banded(&a, &b).unwrap();
        assert!(x.iter().zip(&y).all(|(p, q)| (p - q).abs() < 1e-9), "{y:?}");
        let z = SparseMatrix {
            cols: 2,
            rows: vec![vec![(0, 1.0), (1, 1.0)], vec![(0, 1.0), (1, 1.0)]],
        };
        assert!(matches!(solve_banded(&z, &[1.0, 1.0]), Err(Error::Singular(_))));
    }

    #[test]
    fn exact_discrete_solutions_have_zero_residual() {
        for n in 1..=3 {
            let d = BoxDomain::cube(vec![0.1; n], 1.0, 5).unwrap();
            let p = DiscreteProblem::new(Operator::TraceLaplace { c: 2.0 * n as f64 }, d.clone(), |x| Ok(sq(x))).unwrap();
            let u = p.sample(|x| Ok(sq(x))).unwrap();
            assert!(inf_norm(&p.residual(&u, Execution::Sequential).unwrap()) < 1e-12);
            let q = DiscreteProblem::new(Operator::LogDet { c: 0.0 }, d, |x| Ok(0.5 * sq(x))).unwrap();
            let v = q.sample(|x| Ok(0.5 * sq(x))).unwrap();
            assert!(inf_norm(&q.residual(&v, Execution::Sequential).unwrap()) < 1e-12);
        }
    }

    #[test]
    fn jacobian_matches_directional_differences() {
        let d = BoxDomain::cube(vec![2.0, 0.3], 0.5, 6).unwrap();
        for op in [
            Operator::Example33,
            Operator::LogDet { c: 0.0 },
            Operator::from_name("inverse_trace_general", &[]).unwrap(),
        ] {
            let p = DiscreteProblem::new(op, d.clone(), |x| Ok(sq(x))).unwrap();
            let mut rng = counter_rng(11, 0);
            let u = p.sample(|x| Ok(sq(x) + 0.01 * (3.0 * x[0] * x[1]).sin())).unwrap();
            let (r0, jac) = p.assemble_residual(&u, Execution::Parallel).unwrap();
            let dir: Vec<f64> = (0..p.unknowns()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let jd = jac.mat_vec(&dir);
            let eps = 1e-5;
            let rp = p.residual(&p.with_unknowns(&u, &dir, eps), Execution::Parallel).unwrap();
            let rm = p.residual(&p.with_unknowns(&u, &dir, -eps), Execution::Parallel).unwrap();
            let err = rp
                .iter()
                .zip(&rm)
                .zip(&jd)
                .map(|((a, b), c)| ((a - b) / (2.0 * eps) - c).abs())
                .fold(0.0, f64::max);
            assert!(err <= 1e-5 * inf_norm(&jd).max(1.0), "{err}");
            assert!(inf_norm(&r0).is_finite());
        }
    }

    #[test]
    fn linear_problem_solves_in_one_step() {
        let d = BoxDomain::cube(vec![0.0; 2], 1.0, 17).unwrap();
        let p = DiscreteProblem::new(Operator::TraceLaplace { c: 4.0 }, d.clone(), |x| Ok(sq(x))).unwrap();
        let s = newton_solve(&p, &vec![0.0; d.len()], NewtonOptions::default(), Execution::Parallel).unwrap();
        assert_eq!(s.trace.iterations, 1);
        for (i, x) in d.points().iter().enumerate() {
            assert!((s.field.values[i] - sq(x)).abs() <= 1e-9);
        }
    }

    #[test]
    fn logdet_converges_quadratically() {
        let d = BoxDomain::cube(vec![0.0; 2], 1.0, 13).unwrap();
        let p = DiscreteProblem::new(Operator::LogDet { c: 0.0 }, d.clone(), |x| Ok(0.5 * sq(x))).unwrap();
        let g = p.sample(|x| Ok(0.5 * sq(x) + 0.05 * (1.0 - x[0] * x[0]) * (1.0 - x[1] * x[1]))).unwrap();
        let s = newton_solve(&p, &g, NewtonOptions::default(), Execution::Parallel).unwrap();
        let r = &s.trace.residuals;
        assert!(s.trace.iterations >= 2);
        for w in r.windows(2).skip(1) {
            assert!(w[1] <= 0.1 * w[0], "{r:?}");
        }
    }

    fn example33_error(g: usize) -> f64 {
        let d = BoxDomain::cube(vec![2.0, 0.0], 0.5, g).unwrap();
        let p = DiscreteProblem::new(Operator::Example33, d.clone(), |x| Ok(sq(x).sqrt())).unwrap();
        let bump = |x: &[f64]| (1.0 - 4.0 * (x[0] - 2.0).powi(2)) * (1.0 - 4.0 * x[1] * x[1]);
        let guess = p.sample(|x| Ok(sq(x).sqrt() - 0.05 * bump(x))).unwrap();
        let s = newton_solve(&p, &guess, NewtonOptions::default(), Execution::Parallel).unwrap();
        d.points()
            .iter()
            .zip(&s.field.values)
            .map(|(x, v)| (v - sq(x).sqrt()).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn example33_refines_at_second_order() {
        let (e1, e2) = (example33_error(9), example33_error(17));
        let ratio = e1 / e2;
        assert!((3.2..=4.8).contains(&ratio), "{e1} {e2} {ratio}");
    }

    #[test]
    fn invalid_guess_is_reported_with_the_node() {
        let d = BoxDomain::cube(vec![0.0; 2], 1.0, 5).unwrap();
        let p = DiscreteProblem::new(Operator::LogDet { c: 0.0 }, d.clone(), |x| Ok(0.5 * sq(x))).unwrap();
        let e = newton_solve(&p, &vec![0.0; d.len()], NewtonOptions::default(), Execution::Sequential).unwrap_err();
        assert!(matches!(e, Error::Domain(m) if m.contains("node")));
        assert!(DiscreteProblem::new(Operator::NegTrace, BoxDomain::cube(vec![0.0; 2], 1.0, 65).unwrap(), |_| Ok(0.0)).is_err());
        assert!(DiscreteProblem::new(Operator::NegTrace, BoxDomain::cube(vec![0.0; 4], 1.0, 3).unwrap(), |_| Ok(0.0)).is_err());
    }
}
