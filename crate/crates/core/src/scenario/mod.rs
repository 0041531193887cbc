//! Scenario runner: parses a config, wires the modules into the named
//! checks and writes `summary.json`, `audit.jsonl`, `rankmap.csv` and
//! `meta.json`.

mod config;
mod report;

pub use config::{Check, DomainSpec, FieldSpec, HalfWidth, LadderSpec, NamedSpec, Sampling, Scenario, Tolerances};
pub use report::{
    emit_report, format_f64, rankmap_header, rankmap_row, to_json_line, to_json_pretty, Artifacts, AUDIT_FILE, META_FILE,
    RANKMAP_FILE, SUMMARY_FILE,
};

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::exec::{try_map_indexed, Execution};
use crate::field::io::{read_grid, read_polynomial};
use crate::field::{builtin_field, BoxDomain, Jet4, ScalarField};
use crate::ineq::{
    deru_residual, differential_inequality_audit, dq_bound_audit, harnack_audit, ladder_bounded, semiconcavity_audit,
    AuditConfig, InequalityAudit,
};
use crate::operator::{
    adaptive_convexity_search, direct_convexity_check, form_spectrum, strict_eta, NeighborhoodSampler, Operator,
    OperatorState,
};
use crate::rank::{default_tau_zero, rank_map, rank_verdict, theorem2_certificate, RankSample, RankVerdict};
use crate::solver::{newton_solve, DiscreteProblem, NewtonOptions};
use crate::tensor::SymMatrix;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_VIOLATION: i32 = 2;
pub const EXIT_ERROR: i32 = 3;

const LADDER_FACTOR: f64 = 4.0;
const LADDER_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub exec: Execution,
    /// Overrides the output directory of the config.
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub exit_code: i32,
    /// `"<check>: <reason>"` for the first failing check, or the error text.
    pub first_failure: Option<String>,
    /// Directory the artifacts went to; `None` when nothing was written.
    pub output_dir: Option<PathBuf>,
    pub expect_exit: i32,
    pub artifacts: Option<Artifacts>,
}

impl RunOutcome {
    pub fn as_expected(&self) -> bool {
        self.exit_code == self.expect_exit
    }
}

fn keyed(key: &str, e: Error) -> Error {
    match e {
        Error::Input(m) => Error::Input(format!("{key}: {m}")),
        Error::Parse(m) => Error::Parse(format!("{key}: {m}")),
        Error::Domain(m) => Error::Domain(format!("{key}: {m}")),
        Error::Io(e) => Error::Input(format!("{key}: {e}")),
        other => other,
    }
}

fn unix_millis() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

/// Runs the scenario at `path` and writes its artifacts. Never panics on bad
/// input: every error becomes exit code 3.
pub fn run_scenario(path: &Path, opts: &RunOptions) -> RunOutcome {
    let started = unix_millis();
    let clock = Instant::now();
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let sc = match Scenario::load(path) {
        Ok(sc) => sc,
        Err(e) => {
            return RunOutcome {
                exit_code: EXIT_ERROR,
                first_failure: Some(e.to_string()),
                output_dir: None,
                expect_exit: 0,
                artifacts: None,
            }
        }
    };
    let dir = opts.output.clone().unwrap_or_else(|| match &sc.output {
        Some(o) => base.join(o),
        None => base.join("out").join(&sc.name),
    });
    let mut artifacts = run_loaded(&sc, &base, opts.exec);
    let exit_code = artifacts.summary["exit_code"].as_i64().unwrap_or(EXIT_ERROR as i64) as i32;
    let mut first_failure = artifacts.summary["first_failure"].as_str().map(str::to_string);
    artifacts.meta = json!({
        "scenario": sc.name,
        "config": path.display().to_string(),
        "version": env!("CARGO_PKG_VERSION"),
        "execution": if opts.exec.is_parallel() { "parallel" } else { "sequential" },
        "started_unix_ms": started as u64,
        "elapsed_ms": clock.elapsed().as_millis() as u64,
        "exit_code": exit_code,
    });
    let mut exit = exit_code;
    let output_dir = match emit_report(&dir, &artifacts) {
        Ok(()) => Some(dir),
        Err(e) => {
            exit = EXIT_ERROR;
            first_failure = Some(format!("output: {e}"));
            None
        }
    };
    RunOutcome {
        exit_code: exit,
        first_failure,
        output_dir,
        expect_exit: sc.expect_exit,
        artifacts: Some(artifacts),
    }
}

/// Runs an already parsed scenario without touching the file system beyond
/// reading referenced field files. `meta` is left empty.
pub fn run_loaded(sc: &Scenario, base: &Path, exec: Execution) -> Artifacts {
    let n = sc.n();
    let mut summary = Map::new();
    summary.insert("scenario".into(), json!(sc.name));
    summary.insert("description".into(), json!(sc.description));
    summary.insert("n".into(), json!(n));
    summary.insert("operator".into(), json!({"name": sc.operator.name, "params": sc.operator.params}));
    summary.insert("field".into(), serde_json::to_value(&sc.field).unwrap_or(Value::Null));
    summary.insert("seed".into(), json!(sc.domain.seed));
    let mut checks = Map::new();
    let mut audit_lines = vec![];
    let mut rankmap = vec![];
    let mut first_failure: Option<String> = None;
    let mut error: Option<String> = None;

    match Run::prepare(sc, base, exec) {
        Err(e) => error = Some(e.to_string()),
        Ok(mut run) => {
            summary.insert("domain".into(), domain_json(&run.domain));
            if let Some(s) = run.solver.take() {
                summary.insert("solver".into(), s);
            }
            for &c in &sc.checks {
                match run.check(c) {
                    Ok((passed, reason, mut detail)) => {
                        if let Value::Object(m) = &mut detail {
                            m.insert("passed".into(), json!(passed));
                        }
                        checks.insert(c.name().into(), detail);
                        if !passed && first_failure.is_none() {
                            first_failure = Some(format!("{}: {}", c.name(), reason.unwrap_or_default()));
                        }
                    }
                    Err(e) => {
                        error = Some(format!("{}: {e}", c.name()));
                        break;
                    }
                }
            }
            audit_lines = run.audit_lines;
            rankmap = run.rankmap;
        }
    }
    let exit_code = if error.is_some() {
        EXIT_ERROR
    } else if first_failure.is_some() {
        EXIT_VIOLATION
    } else {
        EXIT_PASS
    };
    let status = match exit_code {
        EXIT_PASS => "pass",
        EXIT_VIOLATION => "violation",
        _ => "error",
    };
    summary.insert("checks".into(), Value::Object(checks));
    summary.insert("status".into(), json!(status));
    summary.insert("exit_code".into(), json!(exit_code));
    summary.insert("first_failure".into(), json!(error.clone().or(first_failure)));
    summary.insert("error".into(), json!(error));
    Artifacts {
        summary: Value::Object(summary),
        audit_lines,
        rankmap,
        n,
        meta: Value::Null,
    }
}

fn domain_json(d: &BoxDomain) -> Value {
    json!({"center": d.center, "half_width": d.half_width, "grid": d.grid_per_axis, "points": d.len()})
}

/// Stable per-point seed.
fn point_seed(seed: u64, stream: u64, i: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ stream.wrapping_mul(0xbf58_476d_1ce4_e5b9) ^ i as u64
}

fn regularized_state(j: &Jet4, s: f64) -> Result<OperatorState> {
    let n = j.n();
    let a = SymMatrix::from_fn(n, |i, k| j.d2u.get(i, k) + if i == k { s } else { 0.0 });
    OperatorState::new(a, j.du.clone(), j.u, j.x.clone())
}

fn plain_state(j: &Jet4) -> Result<OperatorState> {
    OperatorState::new(j.d2u.clone(), j.du.clone(), j.u, j.x.clone())
}

fn argmin(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &x)| if x < bv { (i, x) } else { (bi, bv) })
        .0
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

type CheckOutput = (bool, Option<String>, Value);

struct Run<'a> {
    sc: &'a Scenario,
    exec: Execution,
    op: Operator,
    field: ScalarField,
    domain: BoxDomain,
    solver: Option<Value>,
    tau_zero: Option<f64>,
    rank: Option<(Vec<RankSample>, RankVerdict)>,
    audit: Option<InequalityAudit>,
    audit_lines: Vec<String>,
    rankmap: Vec<String>,
}

impl<'a> Run<'a> {
    fn prepare(sc: &'a Scenario, base: &Path, exec: Execution) -> Result<Self> {
        let n = sc.n();
        let op = Operator::from_name(&sc.operator.name, &sc.operator.params).map_err(|e| keyed("operator", e))?;
        let domain =
            BoxDomain::new(sc.domain.center.clone(), sc.half_widths(), sc.domain.grid).map_err(|e| keyed("domain", e))?;
        let mut solver = None;
        let (field, domain) = match &sc.field {
            FieldSpec::Builtin { name, params } => (builtin_field(name, params, n).map_err(|e| keyed("field", e))?, domain),
            FieldSpec::Polynomial { path } => {
                let p = read_polynomial(&base.join(path)).map_err(|e| keyed(&format!("field.path {}", path.display()), e))?;
                (ScalarField::Polynomial(p), domain)
            }
            FieldSpec::Grid { path } => {
                let g = read_grid(&base.join(path)).map_err(|e| keyed(&format!("field.path {}", path.display()), e))?;
                (ScalarField::Grid(g), domain)
            }
            FieldSpec::Solve {
                boundary,
                guess,
                damping,
                max_iter,
                tol,
            } => {
                let bf = builtin_field(&boundary.name, &boundary.params, n).map_err(|e| keyed("field.boundary", e))?;
                let gf = match guess {
                    Some(g) => builtin_field(&g.name, &g.params, n).map_err(|e| keyed("field.guess", e))?,
                    None => bf.clone(),
                };
                let prob = DiscreteProblem::new(op.clone(), domain, |x| bf.value(x)).map_err(|e| keyed("field", e))?;
                let u0 = prob.sample(|x| gf.value(x)).map_err(|e| keyed("field.guess", e))?;
                let opts = NewtonOptions {
                    damping: *damping,
                    max_iter: *max_iter,
                    tol: *tol,
                };
                let sol = newton_solve(&prob, &u0, opts, exec)?;
                let work = sol.field.interior_box(2)?;
                solver = Some(json!({
                    "unknowns": prob.unknowns(),
                    "iterations": sol.trace.iterations,
                    "final_residual": sol.trace.final_residual,
                    "residuals": sol.trace.residuals,
                    "steps": sol.trace.steps,
                }));
                (ScalarField::Grid(sol.field), work)
            }
        };
        field.validate_box(&domain).map_err(|e| keyed("domain", e))?;
        Ok(Run {
            sc,
            exec,
            op,
            field,
            domain,
            solver,
            tau_zero: None,
            rank: None,
            audit: None,
            audit_lines: vec![],
            rankmap: vec![],
        })
    }

    fn check(&mut self, c: Check) -> Result<CheckOutput> {
        match c {
            Check::Convexity => self.convexity(),
            Check::Ellipticity => self.ellipticity(),
            Check::Rank => self.rank_check(),
            Check::Theorem2 => self.theorem2(),
            Check::Ineq => self.ineq(),
            Check::Semiconcavity => self.semiconcavity(),
            Check::Harnack => self.harnack(),
            Check::Deru => self.deru(),
        }
    }

    fn tau_zero(&mut self) -> Result<f64> {
        if self.tau_zero.is_none() {
            self.tau_zero = Some(match self.sc.tolerances.tau_zero {
                Some(t) => t,
                None => default_tau_zero(&self.field, &self.domain, self.exec)?,
            });
        }
        Ok(self.tau_zero.expect("set above"))
    }

    /// Evenly strided subset of the grid.
    fn grid_subset(&self, count: usize) -> Vec<Vec<f64>> {
        let len = self.domain.len();
        if count >= len {
            return self.domain.points();
        }
        (0..count).map(|i| self.domain.point(i * len / count)).collect()
    }

    /// Random points for exact fields, lattice points for grid data.
    fn sample_points(&self, count: usize, stream: u64) -> Vec<Vec<f64>> {
        if self.field.is_exact() {
            let seed = point_seed(self.sc.domain.seed, stream, 0);
            (0..count).map(|i| self.domain.random_point(seed, i as u64)).collect()
        } else {
            self.grid_subset(count)
        }
    }

    fn rank(&mut self) -> Result<&(Vec<RankSample>, RankVerdict)> {
        if self.rank.is_none() {
            let tau = self.tau_zero()?;
            let samples = rank_map(&self.field, &self.domain, tau, self.exec)?;
            let verdict = rank_verdict(&samples, self.sc.tolerances.theta_tol)?;
            self.rankmap = samples.iter().map(|s| rankmap_row(&s.x, &s.eigenvalues, s.rank)).collect();
            self.rank = Some((samples, verdict));
        }
        Ok(self.rank.as_ref().expect("set above"))
    }

    fn audit(&mut self) -> Result<&InequalityAudit> {
        if self.audit.is_none() {
            let ladder = self.sc.ladder.as_ref().ok_or_else(|| Error::input("ladder: missing"))?;
            let t = &self.sc.tolerances;
            let tau_zero = self.tau_zero()?;
            let cfg = AuditConfig {
                ell: ladder.ell,
                degrees: ladder.degrees.clone(),
                taus: ladder.taus.clone(),
                seed: self.sc.domain.seed,
                tau_zero: Some(tau_zero),
                delta_gap: t.delta_gap,
                solution_tol: t.solution_tol,
                form_tol: t.form_tol,
            };
            let audit = differential_inequality_audit(&self.op, &self.field, &self.domain, &cfg, self.exec)?;
            let mut lines = vec![];
            for (r, rung) in audit.rungs.iter().enumerate() {
                for s in &rung.samples {
                    lines.push(to_json_line(&json!({
                        "rung": r,
                        "degree": rung.degree,
                        "tau": rung.tau,
                        "x": s.x,
                        "Q": s.q,
                        "dQ_norm": s.dq_norm,
                        "traceTerm": s.trace_term,
                        "slack": s.slack,
                        "num1_gap": s.num1_gap,
                        "num2_gap": s.num2_gap,
                        "lower_dQ": s.lower_dq,
                        "deru_residuals": s.deru_residuals,
                        "form_min": s.form_min,
                        "self_check": s.self_check,
                        "masked": s.masked,
                    }))?);
                }
            }
            self.audit_lines = lines;
            self.audit = Some(audit);
        }
        Ok(self.audit.as_ref().expect("set above"))
    }

    fn convexity(&mut self) -> Result<CheckOutput> {
        let sm = &self.sc.sampling;
        let t = &self.sc.tolerances;
        let pts = self.grid_subset(sm.convexity_points);
        let (op, field, seed) = (&self.op, &self.field, self.sc.domain.seed);
        let per = try_map_indexed(self.exec, pts.len(), |i| {
            let st = regularized_state(&field.jet4(&pts[i])?, t.regularization)?;
            let fs = form_spectrum(&op.jet(&st)?)?;
            let sampler = NeighborhoodSampler::around_state(&st, sm.neighborhood, point_seed(seed, 0xc0, i))?;
            let d = direct_convexity_check(op, &st.p, &sampler, sm.convexity_trials, Execution::Sequential)?;
            let a = adaptive_convexity_search(
                op,
                &st.p,
                &sampler,
                sm.convexity_starts,
                sm.convexity_iters,
                Execution::Sequential,
            )?;
            let scale = fs.matrix.max_abs().max(1.0);
            Ok((fs, scale, d.max_violation.max(a.max_violation)))
        })?;
        let scaled_min: Vec<f64> = per.iter().map(|(fs, s, _)| fs.min_eigenvalue / s).collect();
        let violations: Vec<f64> = per.iter().map(|p| p.2).collect();
        let etas: Vec<f64> = per.iter().map(|p| p.0.eta.eta).collect();
        let (im, iv, ie) = (argmin(&scaled_min), argmax(&violations), argmin(&etas));
        let form_ok = scaled_min[im] >= -t.form_tol;
        let direct_ok = violations[iv] <= t.convexity_tol;
        let strict = etas[ie] > t.eta_tol;
        let reason = if !form_ok {
            Some(format!(
                "form min eigenvalue {:.3e} below −form_tol at {:?}",
                per[im].0.min_eigenvalue, pts[im]
            ))
        } else if !direct_ok {
            Some(format!("midpoint violation {:.3e} at {:?}", violations[iv], pts[iv]))
        } else {
            None
        };
        let w = &per[ie].0.eta;
        let detail = json!({
            "points": pts.len(),
            "regularization": t.regularization,
            "min_form_eigenvalue": per[im].0.min_eigenvalue,
            "min_form_eigenvalue_scaled": scaled_min[im],
            "min_form_point": pts[im],
            "max_midpoint_violation": violations[iv],
            "max_violation_point": pts[iv],
            "strict_condition": if strict { "passed" } else { "failed" },
            "min_strict_eta": etas[ie],
            "strict_witness": {
                "point": pts[ie],
                "status": w.status,
                "argument": w.witness,
                "value": w.witness_value,
            },
        });
        Ok((form_ok && direct_ok, reason, detail))
    }

    fn ellipticity(&mut self) -> Result<CheckOutput> {
        let pts = self.domain.points();
        let (op, field) = (&self.op, &self.field);
        let e = try_map_indexed(self.exec, pts.len(), |i| op.jet(&plain_state(&field.jet4(&pts[i])?)?)?.ellipticity())?;
        let i = argmin(&e);
        let ok = e[i] > 0.0;
        let reason = (!ok).then(|| format!("min eigenvalue of F^ab is {:.3e} at {:?}", e[i], pts[i]));
        Ok((ok, reason, json!({"points": pts.len(), "min_ellipticity": e[i], "point": pts[i]})))
    }

    fn rank_check(&mut self) -> Result<CheckOutput> {
        let tau = self.tau_zero()?;
        let (samples, v) = self.rank()?;
        let fixed = if v.fixed_null_directions.is_empty() {
            json!("none")
        } else {
            json!(v.fixed_null_directions)
        };
        let min_eig = samples.iter().map(|s| s.eigenvalues[0]).fold(f64::INFINITY, f64::min);
        let reason = (!v.constant).then(|| format!("rank varies between {} and {}", v.min_rank, v.max_rank));
        let detail = json!({
            "tau_zero": tau,
            "points": samples.len(),
            "min_eigenvalue": min_eig,
            "constant": v.constant,
            "min_rank": v.min_rank,
            "max_rank": v.max_rank,
            "nullity": samples[0].x.len() - v.max_rank,
            "max_principal_angle": v.max_principal_angle,
            "fixed_null_directions": fixed,
        });
        Ok((v.constant, reason, detail))
    }

    fn theorem2(&mut self) -> Result<CheckOutput> {
        let t = self.sc.tolerances.clone();
        let tau = self.tau_zero()?;
        let pts = self.sample_points(self.sc.sampling.certificate_points, 0x7e02);
        let (op, field) = (&self.op, &self.field);
        let per = try_map_indexed(self.exec, pts.len(), |i| {
            let c = theorem2_certificate(op, field, &pts[i], tau)?;
            let st = regularized_state(&field.jet4(&pts[i])?, t.regularization)?;
            Ok((c, strict_eta(&op.jet(&st)?)?.eta))
        })?;
        let ra: Vec<f64> = per.iter().map(|p| p.0.residual_a).collect();
        let rb: Vec<f64> = per.iter().map(|p| p.0.residual_b).collect();
        let rc: Vec<f64> = per.iter().map(|p| p.0.residual_c).collect();
        let rcm: Vec<f64> = per.iter().map(|p| p.0.residual_c_matrix).collect();
        let etas: Vec<f64> = per.iter().map(|p| p.1).collect();
        let strict = min_of(&etas) > t.eta_tol;
        let (_, v) = self.rank()?;
        let fixed = v.max_principal_angle.is_some_and(|a| a <= t.theta_tol) && v.constant;
        let tol = t.certificate_tol;
        let (ia, ib, ic) = (argmax(&ra), argmax(&rb), argmax(&rc));
        let mut reason = None;
        if ra[ia] > tol {
            reason = Some(format!("residual (a) {:.3e} at {:?}", ra[ia], pts[ia]));
        } else if rc[ic] > tol {
            reason = Some(format!("residual (c) {:.3e} at {:?}", rc[ic], pts[ic]));
        } else if strict && rb[ib] > tol {
            reason = Some(format!(
                "strict condition holds but residual (b) is {:.3e} at {:?}",
                rb[ib], pts[ib]
            ));
        } else if strict && !fixed {
            reason = Some("strict condition holds but the null directions are not fixed".to_string());
        }
        let detail = json!({
            "points": pts.len(),
            "k": per[0].0.k,
            "max_residual_a": ra[ia],
            "max_residual_b": rb[ib],
            "max_residual_b_point": pts[ib],
            "max_residual_c": rc[ic],
            "max_residual_c_matrix": max_of(&rcm),
            "min_lambda_gap": per.iter().filter_map(|p| p.0.lambda_gap).fold(f64::INFINITY, f64::min),
            "strict_condition": if strict { "passed" } else { "failed" },
            "min_strict_eta": min_of(&etas),
            "null_directions_fixed": fixed,
            "max_principal_angle": v.max_principal_angle,
            "residual_b_required": strict,
        });
        Ok((reason.is_none(), reason, detail))
    }

    fn ineq(&mut self) -> Result<CheckOutput> {
        let t = self.sc.tolerances.clone();
        let a = self.audit()?;
        let rungs: Vec<Value> = a
            .rungs
            .iter()
            .map(|r| {
                json!({
                    "degree": r.degree,
                    "tau": r.tau,
                    "fitted_C": r.fitted_c,
                    "slack_q50": r.slack.q50,
                    "slack_q90": r.slack.q90,
                    "slack_q99": r.slack.q99,
                    "slack_max": r.slack.max,
                    "masked_fraction": r.masked_fraction,
                    "valid": r.valid,
                    "min_num1_gap": r.min_num1_gap,
                    "min_num2_gap": r.min_num2_gap,
                    "max_self_check": r.max_self_check,
                    "sup_Q": r.sup_q,
                    "lower_dQ_sup": r.lower_dq_sup,
                    "fit": r.fit,
                    "perturb": r.perturb,
                })
            })
            .collect();
        let last = a.last();
        let mut reason = None;
        if let Some(r) = a.rungs.iter().find(|r| !r.valid) {
            reason = Some(format!(
                "rung degree {} τ {:.1e}: {:.1}% of points masked",
                r.degree,
                r.tau,
                100.0 * r.masked_fraction
            ));
        } else if let Some(r) = a.rungs.iter().find(|r| r.min_num1_gap < -t.gap_tol || r.min_num2_gap < -t.gap_tol) {
            reason = Some(format!(
                "rung degree {} τ {:.1e}: num1 gap {:.3e}, num2 gap {:.3e}",
                r.degree, r.tau, r.min_num1_gap, r.min_num2_gap
            ));
        } else if last.slack.q99 > t.slack_tol {
            reason = Some(format!("slack q99 {:.3e} at the ladder end exceeds {:.1e}", last.slack.q99, t.slack_tol));
        } else if !a.monotone_slack {
            reason = Some("slack q99 increases along the ladder".to_string());
        }
        let detail = json!({
            "ell": a.ell,
            "k": a.k,
            "max_solution_residual": a.max_solution_residual,
            "monotone_slack": a.monotone_slack,
            "rungs": rungs,
        });
        Ok((reason.is_none(), reason, detail))
    }

    fn semiconcavity(&mut self) -> Result<CheckOutput> {
        let ladder = self.sc.ladder.clone().expect("validated");
        let t = self.sc.tolerances.clone();
        let (pairs, seed, exec) = (self.sc.sampling.semiconcavity_pairs, self.sc.domain.seed, self.exec);
        let domain = self.domain.clone();
        let a = self.audit()?;
        let mut rows = vec![];
        let mut cfits = vec![];
        let mut reason = None;
        for (r, rung) in a.rungs.iter().enumerate() {
            let s = semiconcavity_audit(&rung.polynomial, ladder.ell, &domain, pairs, point_seed(seed, 0x5c, r), exec)?;
            let d = dq_bound_audit(&rung.polynomial, ladder.ell, &domain, ladder.alpha, t.delta_gap, exec)?;
            if reason.is_none() && s.max_violation > t.semiconcavity_tol {
                reason = Some(format!("rung {r}: chord violation {:.3e}", s.max_violation));
            }
            if reason.is_none() && d.chord_violation > t.semiconcavity_tol {
                reason = Some(format!("rung {r}: descent chord violation {:.3e}", d.chord_violation));
            }
            cfits.push(d.c_fit);
            rows.push(json!({
                "degree": rung.degree,
                "tau": rung.tau,
                "semiconcavity": s,
                "dq_bound": d,
            }));
        }
        let bounded = ladder_bounded(&cfits, LADDER_FACTOR, LADDER_FLOOR);
        if reason.is_none() && !bounded {
            reason = Some(format!("C_fit not bounded along the ladder: {cfits:?}"));
        }
        let detail = json!({"alpha": ladder.alpha, "c_fit_bounded": bounded, "c_fit": cfits, "rungs": rows});
        Ok((reason.is_none(), reason, detail))
    }

    fn harnack(&mut self) -> Result<CheckOutput> {
        let ladder = self.sc.ladder.clone().expect("validated");
        let domain = self.domain.clone();
        let h = (0..domain.n()).map(|a| domain.spacing(a)).fold(f64::INFINITY, f64::min);
        let eps: Vec<f64> = ladder.harnack_eps.iter().map(|e| e * h).collect();
        let a = self.audit()?;
        let mut rows = vec![];
        let mut all = vec![];
        let mut reason = None;
        for (r, rung) in a.rungs.iter().enumerate() {
            let v: Vec<f64> = rung.samples.iter().map(|s| s.q).collect();
            let f: Vec<f64> = rung.samples.iter().map(|s| s.slack.unwrap_or(0.0).max(0.0)).collect();
            let rep = harnack_audit(&domain, &v, &f, ladder.harnack_q, &eps)?;
            if reason.is_none() && !rep.bounded {
                reason = Some(format!("rung {r}: Harnack ratios spread more than a factor 4"));
            }
            all.extend(rep.ratios.iter().map(|x| x.ratio));
            rows.push(json!({"degree": rung.degree, "tau": rung.tau, "report": rep}));
        }
        let across = ladder_bounded(&all, LADDER_FACTOR, LADDER_FLOOR);
        if reason.is_none() && !across {
            reason = Some("Harnack ratios spread more than a factor 4 across the ladder".to_string());
        }
        let detail = json!({
            "q": ladder.harnack_q,
            "eps": eps,
            "bounded_across_ladder": across,
            "rungs": rows,
        });
        Ok((reason.is_none(), reason, detail))
    }

    fn deru(&mut self) -> Result<CheckOutput> {
        let pts = self.sample_points(self.sc.sampling.deru_points, 0xde);
        let (op, field) = (&self.op, &self.field);
        let r = try_map_indexed(self.exec, pts.len(), |i| {
            let mut m: f64 = 0.0;
            for j in 0..field.n() {
                m = m.max(deru_residual(op, field, &pts[i], j)?.abs());
            }
            Ok(m)
        })?;
        let i = argmax(&r);
        let tol = self.sc.tolerances.deru_tol;
        let reason = (r[i] > tol).then(|| format!("residual {:.3e} at {:?}", r[i], pts[i]));
        Ok((r[i] <= tol, reason, json!({"points": pts.len(), "max_residual": r[i], "worst_point": pts[i]})))
    }
}

/// One suite entry.
#[derive(Debug, Clone)]
pub struct SuiteEntry {
    pub config: PathBuf,
    pub outcome: RunOutcome,
}

/// Runs every `*.toml` in `dir`, in file-name order.
pub fn run_suite(dir: &Path, exec: Execution) -> Result<Vec<SuiteEntry>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::input(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::input(format!("no scenario files in {}", dir.display())));
    }
    let opts = RunOptions { exec, output: None };
    Ok(paths
        .into_iter()
        .map(|p| SuiteEntry {
            outcome: run_scenario(&p, &opts),
            config: p,
        })
        .collect())
}

/// 0 when every scenario exits as expected; otherwise 3 if an unexpected
/// error occurred, else 2.
pub fn suite_exit_code(entries: &[SuiteEntry]) -> i32 {
    let bad: Vec<&RunOutcome> = entries.iter().map(|e| &e.outcome).filter(|o| !o.as_expected()).collect();
    if bad.is_empty() {
        EXIT_PASS
    } else if bad.iter().any(|o| o.exit_code == EXIT_ERROR) {
        EXIT_ERROR
    } else {
        EXIT_VIOLATION
    }
}
