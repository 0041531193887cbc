//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use ranklab_core::exec::Execution;
use ranklab_core::field::{counter_rng, BoxDomain, Polynomial, ScalarField};
use ranklab_core::ineq::{deru_residual, h_concavity_check};
use ranklab_core::operator::{
    adaptive_convexity_search, direct_convexity_check, form_spectrum, strict_eta, NeighborhoodSampler, Operator,
    OperatorState, CONVEX_CATALOG,
};
use ranklab_core::scenario::{run_loaded, run_scenario, Artifacts, RunOptions, Scenario, SUMMARY_FILE};
use ranklab_core::solver::{newton_solve, DiscreteProblem, NewtonOptions};
use ranklab_core::symmat::{d2lambda, dlambda, eigh, HessianEigenJet};
use ranklab_core::tensor::SymMatrix;
use serde_json::Value;

type Outcome = Result<String, String>;

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn load(name: &str) -> Artifacts {
    let dir = scenarios_dir();
    let sc = Scenario::load(&dir.join(format!("{name}.toml"))).expect("bundled scenario parses");
    run_loaded(&sc, &dir, Execution::Parallel)
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn ensure(ok: bool, msg: String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg)
    }
}

fn random_quartic(n: usize, seed: u64) -> Polynomial {
    let mut rng = counter_rng(seed, 0);
    let m = ranklab_core::field::monomial_count(n, 4);
    let c: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Polynomial::with_coefficients(n, 4, vec![0.0; n], c).unwrap()
}

fn eigenvalue(p: &Polynomial, x: &[f64], j: usize) -> f64 {
    eigh(&p.hessian(x)).unwrap().eigenvalues[j]
}

fn shifted(x: &[f64], moves: &[(usize, f64)]) -> Vec<f64> {
    let mut y = x.to_vec();
    for &(a, d) in moves {
        y[a] += d;
    }
    y
}

fn c1_eigen_calculus() -> Outcome {
    let start = Instant::now();
    let (h1, h2) = (1e-5, 1e-4);
    let mut worst: f64 = 0.0;
    let mut fields = 0;
    for f in 0..50u64 {
        let n = 2 + (f as usize % 3);
        let p = random_quartic(n, 1000 + f);
        let mut rng = counter_rng(2000 + f, 0);
        let (x, jet) = loop {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let j = p.jet4(&x);
            let ej = HessianEigenJet::new(&j.d2u, &j.d3u, &j.d4u, None).unwrap();
            if ej.spectrum.gap_min > 1e-3 {
                break (x, ej);
            }
        };
        fields += 1;
        for j in 0..n {
            let d1 = jet.to_world_vector(&dlambda(&jet, j).unwrap());
            let d2 = jet.to_world_matrix(&d2lambda(&jet, j).unwrap());
            let fd1: Vec<f64> = (0..n)
                .map(|a| (eigenvalue(&p, &shifted(&x, &[(a, h1)]), j) - eigenvalue(&p, &shifted(&x, &[(a, -h1)]), j)) / (2.0 * h1))
                .collect();
            let fd2 = SymMatrix::from_fn(n, |a, b| {
                let e = |sa: f64, sb: f64| eigenvalue(&p, &shifted(&x, &[(a, sa * h2), (b, sb * h2)]), j);
                (e(1.0, 1.0) - e(1.0, -1.0) - e(-1.0, 1.0) + e(-1.0, -1.0)) / (4.0 * h2 * h2)
            });
            let s1 = fd1.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-3);
            let e1 = d1.iter().zip(&fd1).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / s1;
            let e2 = d2.sub(&fd2).max_abs() / fd2.max_abs().max(1e-3);
            worst = worst.max(e1).max(e2);
        }
    }
    let j = Polynomial::from_terms(
        2,
        vec![0.0; 2],
        &[(vec![2, 0], 0.5), (vec![0, 2], 1.5), (vec![2, 1], 1.0)],
    )
    .unwrap()
    .jet4(&[0.0, 0.0]);
    let ej = HessianEigenJet::new(&j.d2u, &j.d3u, &j.d4u, None).unwrap();
    let worked = ej.to_world_matrix(&d2lambda(&ej, 0).unwrap()).get(0, 0);
    let secs = start.elapsed().as_secs_f64();
    ensure(worst <= 1e-5, format!("max relative error {worst:.2e}"))?;
    ensure((worked + 4.0).abs() <= 1e-6, format!("worked value {worked}"))?;
    ensure(secs < 10.0, format!("runtime {secs:.1}s"))?;
    Ok(format!("{fields} quartics, max rel err {worst:.1e}, worked value {worked}, {secs:.2}s"))
}

fn c2_h_concavity() -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    for n in 1..=5 {
        for ell in 1..=n {
            let v = h_concavity_check(n, ell, 10_000, 77 + n as u64, Execution::Parallel).map_err(|e| e.to_string())?;
            worst = worst.max(v);
        }
    }
    ensure(worst <= 1e-9, format!("max violation {worst:.2e}"))?;
    Ok(format!("10^4 trials for each n ≤ 5, ℓ ≤ n; max violation {worst:.1e}"))
}

fn random_state(n: usize, seed: u64) -> OperatorState {
    let mut rng = counter_rng(seed, 0);
    let lam: Vec<f64> = (0..n).map(|_| rng.gen_range(0.3..2.0)).collect();
    let g = SymMatrix::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let r = eigh(&g).unwrap().frame;
    let a = SymMatrix::diag(&lam).conjugate(&r);
    let p = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let u = rng.gen_range(-1.0..1.0);
    let x = (0..n).map(|_| rng.gen_range(0.4..1.2)).collect();
    OperatorState::new(a, p, u, x).unwrap()
}

fn c3_convexity_equivalence() -> Outcome {
    let (mut decided, mut agree, mut convex, mut undecided) = (0, 0, 0, 0);
    let mut disagreements = vec![];
    for (k, name) in CONVEX_CATALOG.iter().enumerate() {
        let op = Operator::from_name(name, &[]).map_err(|e| e.to_string())?;
        for i in 0..100u64 {
            let n = 2 + (i as usize % 2);
            let s = random_state(n, 10_000 * k as u64 + i);
            let fs = form_spectrum(&op.jet(&s).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
            let scale = fs.matrix.max_abs().max(1.0);
            let form_convex = if fs.min_eigenvalue >= -1e-8 {
                true
            } else if fs.min_eigenvalue <= -1e-4 * scale {
                false
            } else {
                undecided += 1;
                continue;
            };
            let sampler = NeighborhoodSampler::around_state(&s, 0.05, 31 * i + k as u64).map_err(|e| e.to_string())?;
            let d = direct_convexity_check(&op, &s.p, &sampler, 2000, Execution::Parallel).map_err(|e| e.to_string())?;
            let a = adaptive_convexity_search(&op, &s.p, &sampler, 8, 300, Execution::Parallel).map_err(|e| e.to_string())?;
            let direct_convex = d.max_violation.max(a.max_violation) <= 1e-8;
            decided += 1;
            convex += form_convex as usize;
            if form_convex == direct_convex {
                agree += 1;
            } else {
                disagreements.push(format!("{name} state {i}"));
            }
        }
    }
    ensure(agree == decided, format!("{agree}/{decided} agree; {disagreements:?}"))?;
    Ok(format!("{agree}/{decided} decided states agree ({convex} convex), {undecided} undecided"))
}

fn c4_strict_separation() -> Outcome {
    let s = OperatorState::new(SymMatrix::identity(3), vec![0.0; 3], 0.0, vec![1.0; 3]).unwrap();
    let eta = strict_eta(&Operator::LogDet { c: 0.0 }.jet(&s).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?.eta;
    ensure((eta - 1.0).abs() <= 1e-9, format!("logdet η at I = {eta}"))?;
    let u = ScalarField::Radial(ranklab_core::field::RadialField::new(2, 1.0).unwrap());
    let dom = BoxDomain::cube(vec![2.0, 0.0], 0.25, 5).unwrap();
    let mut worst_eta: f64 = f64::NEG_INFINITY;
    let mut worst_min: f64 = f64::INFINITY;
    for op in [Operator::Example33, Operator::KorevaarLewis] {
        for x in dom.points() {
            let j = u.jet4(&x).map_err(|e| e.to_string())?;
            let a = j.d2u.add(&SymMatrix::identity(2).scaled(1e-3));
            let s = OperatorState::new(a, j.du.clone(), j.u, x.clone()).unwrap();
            let fs = form_spectrum(&op.jet(&s).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
            let w = &fs.eta;
            ensure(
                w.witness.x.frobenius_norm() > 0.5 && w.witness_value <= 1e-6,
                format!("{op:?} at {x:?}: no witness (value {:.2e})", w.witness_value),
            )?;
            worst_eta = worst_eta.max(w.eta);
            worst_min = worst_min.min(fs.min_eigenvalue);
        }
    }
    ensure(worst_min >= -1e-8, format!("form min eigenvalue {worst_min:.2e}"))?;
    ensure(worst_eta <= 1e-6, format!("max η {worst_eta:.2e}"))?;
    Ok(format!("logdet η(I) = {eta}; example33/KL: min form eig {worst_min:.1e}, max η {worst_eta:.1e}, witnesses found"))
}

fn c5_solution_identity() -> Outcome {
    let quad = ScalarField::Polynomial(Polynomial::diagonal_quadratic(&[3.0, 3.0, 3.0], vec![0.0; 3]).unwrap());
    let radial = ScalarField::Radial(ranklab_core::field::RadialField::new(2, 1.0).unwrap());
    let cases = [
        (Operator::TraceLaplace { c: 9.0 }, quad, BoxDomain::cube(vec![0.0; 3], 1.0, 3).unwrap()),
        (Operator::Example33, radial, BoxDomain::cube(vec![2.0, 0.0], 0.5, 3).unwrap()),
    ];
    let mut worst: f64 = 0.0;
    for (op, f, dom) in &cases {
        for i in 0..200 {
            let x = dom.random_point(55, i);
            for j in 0..f.n() {
                worst = worst.max(deru_residual(op, f, &x, j).map_err(|e| e.to_string())?.abs());
            }
        }
    }
    ensure(worst <= 1e-8, format!("max residual {worst:.2e}"))?;
    Ok(format!("200 points each, max residual {worst:.1e}"))
}

fn poisson_runs() -> Vec<(usize, Artifacts, f64)> {
    ["poisson_rank1", "poisson_rank1_n3"]
        .iter()
        .map(|name| {
            let t = Instant::now();
            let a = load(name);
            (a.n, a, t.elapsed().as_secs_f64())
        })
        .collect()
}

fn c6_pipeline(runs: &[(usize, Artifacts, f64)]) -> Outcome {
    let mut parts = vec![];
    for (n, a, secs) in runs {
        let s = &a.summary;
        ensure(s["exit_code"] == 0, format!("n={n}: exit {} ({})", s["exit_code"], s["first_failure"]))?;
        let r = &s["checks"]["rank"];
        ensure(
            r["constant"] == true && r["min_rank"] == 1 && r["max_rank"] == 1,
            format!("n={n}: rank {r}"),
        )?;
        let rungs = s["checks"]["ineq"]["rungs"].as_array().cloned().unwrap_or_default();
        let last = rungs.last().ok_or("no rungs")?;
        ensure(last["degree"] == 6 && num(&last["tau"]) == 1e-4, format!("n={n}: ladder end {last}"))?;
        let q99 = num(&last["slack_q99"]);
        ensure(q99 <= 1e-4, format!("n={n}: slack q99 {q99:.2e}"))?;
        for r in &rungs {
            let (g1, g2, m) = (num(&r["min_num1_gap"]), num(&r["min_num2_gap"]), num(&r["masked_fraction"]));
            ensure(g1 >= -1e-8 && g2 >= -1e-8, format!("n={n}: gaps {g1:.2e} {g2:.2e}"))?;
            ensure(m < 0.05, format!("n={n}: masked {m}"))?;
        }
        ensure(*secs < 120.0, format!("n={n}: runtime {secs:.1}s"))?;
        parts.push(format!("n={n}: q99 {q99:.1e}, {secs:.1}s"));
    }
    Ok(parts.join("; "))
}

fn c7_theorem2(runs: &[(usize, Artifacts, f64)]) -> Outcome {
    let mut parts = vec![];
    for (n, a, _) in runs {
        let t = &a.summary["checks"]["theorem2"];
        let m = ["max_residual_a", "max_residual_b", "max_residual_c"].map(|k| num(&t[k]));
        ensure(t["points"] == 50, format!("n={n}: {} points", t["points"]))?;
        ensure(m.iter().all(|v| *v <= 1e-7), format!("n={n}: residuals {m:?}"))?;
        let r = &a.summary["checks"]["rank"];
        let angle = num(&r["max_principal_angle"]);
        let dirs = r["fixed_null_directions"].as_array().map_or(0, |v| v.len());
        ensure(angle <= 1e-8 && dirs == n - 1, format!("n={n}: angle {angle:.2e}, {dirs} fixed directions"))?;
        parts.push(format!("n={n}: residuals {:.1e}, angle {angle:.1e}", m.iter().cloned().fold(0.0, f64::max)));
    }
    Ok(parts.join("; "))
}

fn c8_counterexample() -> Outcome {
    let a = load("radial_counterexample");
    let s = &a.summary;
    ensure(s["exit_code"] == 0, format!("exit {} ({})", s["exit_code"], s["first_failure"]))?;
    let (r, t, c) = (&s["checks"]["rank"], &s["checks"]["theorem2"], &s["checks"]["convexity"]);
    ensure(r["constant"] == true && r["max_rank"] == 1 && r["min_rank"] == 1, format!("rank {r}"))?;
    let angle = num(&r["max_principal_angle"]);
    let b = num(&t["max_residual_b"]);
    ensure(angle >= 0.01, format!("angle {angle}"))?;
    ensure(b >= 1e-3, format!("residual (b) {b}"))?;
    ensure(c["passed"] == true, "convexity failed".into())?;
    ensure(r["fixed_null_directions"] == "none" && c["strict_condition"] == "failed", "flags".into())?;
    Ok(format!("rank 1 everywhere, angle {angle:.3} rad, residual (b) {b:.3}, convex, strict condition failed"))
}

fn c9_regularity(runs: &[(usize, Artifacts, f64)]) -> Outcome {
    let mut parts = vec![];
    for (n, a, _) in runs {
        let c = &a.summary["checks"];
        let sc = &c["semiconcavity"];
        let worst = sc["rungs"]
            .as_array()
            .ok_or("no semiconcavity rungs")?
            .iter()
            .map(|r| num(&r["semiconcavity"]["max_violation"]))
            .fold(f64::NEG_INFINITY, f64::max);
        ensure(worst <= 1e-8, format!("n={n}: semiconcavity violation {worst:.2e}"))?;
        ensure(sc["c_fit_bounded"] == true, format!("n={n}: C_fit {}", sc["c_fit"]))?;
        let h = &c["harnack"];
        ensure(num(&h["q"]) == 0.5, "q".into())?;
        let eps: Vec<f64> = h["eps"].as_array().ok_or("eps")?.iter().map(num).collect();
        let spacing = 1.0 / (a.summary["domain"]["grid"].as_f64().unwrap_or(2.0) - 1.0);
        ensure(
            eps.iter().zip([2.0, 4.0, 8.0]).all(|(e, k)| (e - k * spacing).abs() < 1e-12),
            format!("eps {eps:?}"),
        )?;
        let each = h["rungs"].as_array().ok_or("rungs")?.iter().all(|r| r["report"]["bounded"] == true);
        ensure(each && h["bounded_across_ladder"] == true, format!("n={n}: Harnack ratios unbounded"))?;
        parts.push(format!("n={n}: violation {worst:.1e}, C_fit bounded, Harnack bounded"));
    }
    Ok(parts.join("; "))
}

fn sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn example33_error(g: usize) -> Result<f64, String> {
    let d = BoxDomain::cube(vec![2.0, 0.0], 0.5, g).unwrap();
    let p = DiscreteProblem::new(Operator::Example33, d.clone(), |x| Ok(sq(x).sqrt())).map_err(|e| e.to_string())?;
    let bump = |x: &[f64]| (1.0 - 4.0 * (x[0] - 2.0).powi(2)) * (1.0 - 4.0 * x[1] * x[1]);
    let guess = p.sample(|x| Ok(sq(x).sqrt() - 0.05 * bump(x))).map_err(|e| e.to_string())?;
    let s = newton_solve(&p, &guess, NewtonOptions::default(), Execution::Parallel).map_err(|e| e.to_string())?;
    Ok(d.points()
        .iter()
        .zip(&s.field.values)
        .map(|(x, v)| (v - sq(x).sqrt()).abs())
        .fold(0.0, f64::max))
}

fn c10_solver() -> Outcome {
    let d = BoxDomain::cube(vec![0.0; 2], 1.0, 17).unwrap();
    let p = DiscreteProblem::new(Operator::TraceLaplace { c: 4.0 }, d.clone(), |x| Ok(sq(x))).map_err(|e| e.to_string())?;
    let s = newton_solve(&p, &vec![0.0; d.len()], NewtonOptions::default(), Execution::Parallel).map_err(|e| e.to_string())?;
    let err = d.points().iter().zip(&s.field.values).map(|(x, v)| (v - sq(x)).abs()).fold(0.0, f64::max);
    ensure(s.trace.iterations == 1 && err <= 1e-9, format!("laplace: {} steps, error {err:.2e}", s.trace.iterations))?;

    let d = BoxDomain::cube(vec![0.0; 2], 1.0, 13).unwrap();
    let p = DiscreteProblem::new(Operator::LogDet { c: 0.0 }, d.clone(), |x| Ok(0.5 * sq(x))).map_err(|e| e.to_string())?;
    let g = p
        .sample(|x| Ok(0.5 * sq(x) + 0.05 * (1.0 - x[0] * x[0]) * (1.0 - x[1] * x[1])))
        .map_err(|e| e.to_string())?;
    let s = newton_solve(&p, &g, NewtonOptions::default(), Execution::Parallel).map_err(|e| e.to_string())?;
    let r = &s.trace.residuals;
    let late = r.windows(2).skip(1).map(|w| w[1] / w[0]).fold(0.0, f64::max);
    ensure(r.len() >= 3 && late <= 0.1, format!("logdet residuals {r:?}"))?;

    let ratio = example33_error(9)? / example33_error(17)?;
    ensure((3.2..=4.8).contains(&ratio), format!("refinement factor {ratio}"))?;
    Ok(format!("laplace error {err:.1e} in 1 step; logdet late ratio {late:.1e}; example33 refinement {ratio:.2}"))
}

fn c11_determinism() -> Outcome {
    let dir = scenarios_dir();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    for p in &paths {
        let mut bytes = vec![];
        for (k, exec) in [Execution::Parallel, Execution::Parallel, Execution::Sequential].into_iter().enumerate() {
            let out = tmp.path().join(format!("{}-{k}", p.file_stem().unwrap().to_string_lossy()));
            let o = run_scenario(p, &RunOptions { exec, output: Some(out.clone()) });
            ensure(o.as_expected(), format!("{}: exit {}", p.display(), o.exit_code))?;
            bytes.push(std::fs::read(out.join(SUMMARY_FILE)).map_err(|e| e.to_string())?);
        }
        ensure(
            bytes[0] == bytes[1] && bytes[1] == bytes[2],
            format!("{}: summary.json differs between runs", p.display()),
        )?;
    }
    Ok(format!("{} scenarios, 3 runs each (2 parallel, 1 sequential), byte-identical", paths.len()))
}

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn main() {
    let runs = poisson_runs();
    let criteria: Vec<Criterion> = vec![
        ("eigenvalue calculus", Box::new(c1_eigen_calculus)),
        ("concavity of h", Box::new(c2_h_concavity)),
        ("convexity-condition equivalence", Box::new(c3_convexity_equivalence)),
        ("strict vs non-strict separation", Box::new(c4_strict_separation)),
        ("solution identity", Box::new(c5_solution_identity)),
        ("theorem 1 pipeline", Box::new(|| c6_pipeline(&runs))),
        ("theorem 2 positive case", Box::new(|| c7_theorem2(&runs))),
        ("counterexample detection", Box::new(c8_counterexample)),
        ("regularity lemmas", Box::new(|| c9_regularity(&runs))),
        ("solver", Box::new(c10_solver)),
        ("determinism", Box::new(c11_determinism)),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(msg) => println!("PASS [{:>2}] {name}: {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL [{:>2}] {name}: {msg}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
