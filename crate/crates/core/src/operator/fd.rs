use super::{Operator, OperatorJet, OperatorState};
use crate::error::Result;

/// First-derivative step, relative to the block magnitude.
const H1: f64 = 1e-4;
/// Second-derivative step, relative to the block magnitude.
const H2: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Var {
    A(usize, usize),
    P(usize),
    U,
    X(usize),
}

fn variables(n: usize) -> Vec<Var> {
    let mut v = Vec::new();
    for a in 0..n {
        for b in a..n {
            v.push(Var::A(a, b));
        }
    }
    v.extend((0..n).map(Var::P));
    v.push(Var::U);
    v.extend((0..n).map(Var::X));
    v
}

fn block_scale(s: &OperatorState, v: Var) -> f64 {
    let m = |xs: &[f64]| xs.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    match v {
        Var::A(..) => m(s.a.as_slice()),
        Var::P(_) => m(&s.p),
        Var::U => s.u.abs().max(1.0),
        Var::X(_) => m(&s.x),
    }
}

fn shift(s: &mut OperatorState, v: Var, h: f64) {
    match v {
        // Moving along E_ab = (e_a e_bᵀ + e_b e_aᵀ)/2.
        Var::A(a, b) if a == b => s.a.set(a, a, s.a.get(a, a) + h),
        Var::A(a, b) => s.a.set(a, b, s.a.get(a, b) + 0.5 * h),
        Var::P(a) => s.p[a] += h,
        Var::U => s.u += h,
        Var::X(a) => s.x[a] += h,
    }
}

/// Central-difference jet of `op` at `s`; used for operators without an
/// analytic jet and to cross-check the builtins.
pub fn fd_operator_jet(op: &Operator, s: &OperatorState) -> Result<OperatorJet> {
    let n = s.n();
    let vars = variables(n);
    let m = vars.len();
    let g = |moves: &[(Var, f64)]| -> Result<f64> {
        let mut t = s.clone();
        for &(v, h) in moves {
            shift(&mut t, v, h);
        }
        op.value(&t)
    };
    let g0 = op.value(s)?;
    let h1: Vec<f64> = vars.iter().map(|&v| H1 * block_scale(s, v)).collect();
    let h2: Vec<f64> = vars.iter().map(|&v| H2 * block_scale(s, v)).collect();

    let mut first = vec![0.0; m];
    for k in 0..m {
        first[k] = (g(&[(vars[k], h1[k])])? - g(&[(vars[k], -h1[k])])?) / (2.0 * h1[k]);
    }
    let mut second = vec![0.0; m * m];
    for k in 0..m {
        let (vk, hk) = (vars[k], h2[k]);
        second[k * m + k] = (g(&[(vk, hk)])? - 2.0 * g0 + g(&[(vk, -hk)])?) / (hk * hk);
        for l in (k + 1)..m {
            let (vl, hl) = (vars[l], h2[l]);
            let v = (g(&[(vk, hk), (vl, hl)])? - g(&[(vk, hk), (vl, -hl)])? - g(&[(vk, -hk), (vl, hl)])?
                + g(&[(vk, -hk), (vl, -hl)])?)
                / (4.0 * hk * hl);
            second[k * m + l] = v;
            second[l * m + k] = v;
        }
    }

    let mut j = OperatorJet::zeros(n, g0);
    for (k, &v) in vars.iter().enumerate() {
        match v {
            Var::A(a, b) => j.fab.set(a, b, first[k]),
            Var::P(a) => j.fp[a] = first[k],
            Var::U => j.fu = first[k],
            Var::X(a) => j.fx[a] = first[k],
        }
    }
    for (k, &vk) in vars.iter().enumerate() {
        for (l, &vl) in vars.iter().enumerate() {
            let d = second[k * m + l];
            match (vk, vl) {
                (Var::A(a, b), Var::A(r, q)) => {
                    for (i1, i2) in [(a, b), (b, a)] {
                        for (i3, i4) in [(r, q), (q, r)] {
                            j.fabrs.set(i1, i2, i3, i4, d);
                        }
                    }
                }
                (Var::A(a, b), Var::P(r)) => {
                    j.fab_p.set(a, b, r, d);
                    j.fab_p.set(b, a, r, d);
                }
                (Var::A(a, b), Var::U) => j.fab_u.set(a, b, d),
                (Var::A(a, b), Var::X(r)) => {
                    j.fab_x.set(a, b, r, d);
                    j.fab_x.set(b, a, r, d);
                }
                (Var::P(a), Var::P(b)) => j.fpp.set(a, b, d),
                (Var::P(a), Var::U) => j.fpu[a] = d,
                (Var::P(a), Var::X(b)) => j.fpx.set(a, b, d),
                (Var::U, Var::U) => j.fuu = d,
                (Var::U, Var::X(a)) => j.fux[a] = d,
                (Var::X(a), Var::X(b)) => j.fxx.set(a, b, d),
                _ => {}
            }
        }
    }
    Ok(j)
}
