use rand::Rng;
use serde::Serialize;

use super::q_frame;
use crate::error::{Error, Result};
use crate::exec::{try_map_indexed, Execution};
use crate::field::{counter_rng, BoxDomain, Polynomial};
use crate::symmat::{eigh, h_lipschitz, q_ell, HessianEigenJet};
use crate::tensor::norm;

/// True when all values lie within `factor` of each other after clamping
/// below at `floor`.
pub fn ladder_bounded(values: &[f64], factor: f64, floor: f64) -> bool {
    if values.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let c: Vec<f64> = values.iter().map(|v| v.max(floor)).collect();
    let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
    c.is_empty() || hi <= factor * lo
}

fn q_of(p: &Polynomial, x: &[f64], ell: usize) -> Result<f64> {
    q_ell(&eigh(&p.hessian(x))?, ell)
}

/// `K = Lip(h) · max ‖D⁴P‖_F` over the grid. Since `h` is concave and
/// Lipschitz, `(1−t)Q(x) + tQ(y) ≤ Q(x_t) + K t(1−t)|y − x|²`.
pub fn semiconcavity_constant(p: &Polynomial, ell: usize, domain: &BoxDomain) -> f64 {
    let d4 = domain
        .points()
        .iter()
        .map(|x| p.jet4(x).d4u.frobenius_norm())
        .fold(0.0, f64::max);
    h_lipschitz(p.n(), ell) * d4
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SemiconcavityReport {
    pub pairs: usize,
    pub k: f64,
    pub max_violation: f64,
}

/// Chord test on random pairs in the box with random `t ∈ (0, 1)`.
pub fn semiconcavity_audit(
    p: &Polynomial,
    ell: usize,
    domain: &BoxDomain,
    pairs: usize,
    seed: u64,
    exec: Execution,
) -> Result<SemiconcavityReport> {
    if pairs == 0 {
        return Err(Error::input("semiconcavity audit needs at least one pair"));
    }
    let k = semiconcavity_constant(p, ell, domain);
    let v = try_map_indexed(exec, pairs, |i| {
        let mut rng = counter_rng(seed, i as u64);
        let x = domain.random_point(seed ^ 0x5c, 2 * i as u64);
        let y = domain.random_point(seed ^ 0x5c, 2 * i as u64 + 1);
        let t: f64 = rng.gen_range(0.0..1.0);
        let xt: Vec<f64> = x.iter().zip(&y).map(|(a, b)| (1.0 - t) * a + t * b).collect();
        let d2: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok((1.0 - t) * q_of(p, &x, ell)? + t * q_of(p, &y, ell)? - q_of(p, &xt, ell)? - k * t * (1.0 - t) * d2)
    })?;
    Ok(SemiconcavityReport {
        pairs,
        k,
        max_violation: v.into_iter().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Value of `Q` and, where smooth, its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct QSample {
    pub q: f64,
    pub dq: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DqBoundReport {
    pub alpha: f64,
    pub inner_points: usize,
    pub masked: usize,
    pub sup_q: f64,
    pub max_dq: f64,
    /// `max |DQ|^{1+1/α} / sup Q` over the inner half box.
    pub c_fit: f64,
    pub k: f64,
    /// Largest `Q(x + rξ) − Q(x) + r|DQ| − K r^{1+α}` along the descent
    /// direction `ξ = −DQ/|DQ|`, `r ∈ {h, 2h, 4h}`; positive when `Q` fails
    /// the one-sided bound that the gradient estimate rests on.
    pub chord_violation: f64,
}

/// Gradient bound over the inner half box for an arbitrary `Q` with
/// semi-concavity constant `k`.
pub fn dq_bound_from_samples(
    q: &(dyn Fn(&[f64]) -> Result<QSample> + Sync),
    domain: &BoxDomain,
    alpha: f64,
    k: f64,
    exec: Execution,
) -> Result<DqBoundReport> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::input("α must lie in (0, 1]"));
    }
    let all = try_map_indexed(exec, domain.len(), |i| q(&domain.point(i)))?;
    let sup_q = all.iter().map(|s| s.q).fold(f64::NEG_INFINITY, f64::max);
    let inner = domain.inner_indices(0.5);
    let h = (0..domain.n()).map(|a| domain.spacing(a)).fold(f64::INFINITY, f64::min);
    let per_point = try_map_indexed(exec, inner.len(), |t| -> Result<Option<(f64, f64)>> {
        let i = inner[t];
        let Some(dq) = &all[i].dq else { return Ok(None) };
        let g = norm(dq);
        let x = domain.point(i);
        let mut worst = f64::NEG_INFINITY;
        if g > 1e-14 * all[i].q.abs().max(1.0) {
            for r in [h, 2.0 * h, 4.0 * h] {
                let y: Vec<f64> = x.iter().zip(dq).map(|(a, d)| a - r * d / g).collect();
                if !domain.contains(&y) {
                    continue;
                }
                worst = worst.max(q(&y)?.q - all[i].q + r * g - k * r.powf(1.0 + alpha));
            }
        }
        Ok(Some((g, worst)))
    })?;
    let live: Vec<(f64, f64)> = per_point.iter().flatten().copied().collect();
    if live.is_empty() {
        return Err(Error::precondition("no unmasked points in the inner half box"));
    }
    let max_dq = live.iter().map(|p| p.0).fold(0.0, f64::max);
    let lhs = max_dq.powf(1.0 + 1.0 / alpha);
    let c_fit = if lhs == 0.0 {
        0.0
    } else if sup_q > 0.0 {
        lhs / sup_q
    } else {
        f64::INFINITY
    };
    Ok(DqBoundReport {
        alpha,
        inner_points: inner.len(),
        masked: inner.len() - live.len(),
        sup_q,
        max_dq,
        c_fit,
        k,
        chord_violation: live.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max),
    })
}

pub fn dq_bound_audit(
    p: &Polynomial,
    ell: usize,
    domain: &BoxDomain,
    alpha: f64,
    delta_gap: Option<f64>,
    exec: Execution,
) -> Result<DqBoundReport> {
    let k = semiconcavity_constant(p, ell, domain);
    let q = |x: &[f64]| -> Result<QSample> {
        let j = p.jet4(x);
        let ej = HessianEigenJet::new(&j.d2u, &j.d3u, &j.d4u, delta_gap)?;
        let (q, rest) = q_frame(&ej, ell)?;
        Ok(QSample {
            q,
            dq: rest.map(|(dq, _, _)| ej.to_world_vector(&dq)),
        })
    };
    dq_bound_from_samples(&q, domain, alpha, k, exec)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HarnackRatio {
    pub eps: f64,
    /// `(mean over B' of v_ε^q)^{1/q}`.
    pub mean_q: f64,
    pub inf: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HarnackReport {
    pub q_exponent: f64,
    /// `‖f‖_{Lⁿ}` over the whole box, by the grid Riemann sum.
    pub f_norm: f64,
    pub ratios: Vec<HarnackRatio>,
    /// Ratios within a factor 4 of each other.
    pub bounded: bool,
}

/// Mollified weak Harnack ratios of grid data `v ≥ 0` with source `f`,
/// evaluated on the inner half box `B'`.
///
/// The bump `exp(−1/(1 − s²))`, `s = |y|/ε`, is renormalized over the part
/// of its support that lies in the box.
pub fn harnack_audit(
    domain: &BoxDomain,
    v: &[f64],
    f: &[f64],
    q_exponent: f64,
    eps: &[f64],
) -> Result<HarnackReport> {
    let n = domain.n();
    if v.len() != domain.len() || f.len() != domain.len() {
        return Err(Error::input("Harnack data must have one value per grid point"));
    }
    if !(q_exponent > 0.0) || eps.is_empty() {
        return Err(Error::input("Harnack audit needs q > 0 and at least one ε"));
    }
    if let Some(m) = v.iter().copied().find(|&t| t < -1e-10 || !t.is_finite()) {
        return Err(Error::precondition(format!("Harnack data must be nonnegative, found {m:.3e}")));
    }
    let v: Vec<f64> = v.iter().map(|t| t.max(0.0)).collect();
    let hs: Vec<f64> = (0..n).map(|a| domain.spacing(a)).collect();
    let h = hs.iter().copied().fold(f64::INFINITY, f64::min);
    let cell: f64 = hs.iter().product();
    let f_norm = (f.iter().map(|t| t.abs().powi(n as i32)).sum::<f64>() * cell).powf(1.0 / n as f64);
    let inner = domain.inner_indices(0.5);
    let g = domain.grid_per_axis as i64;

    let mut ratios = Vec::with_capacity(eps.len());
    for &e in eps {
        if !(e >= 2.0 * h * (1.0 - 1e-12)) {
            return Err(Error::input(format!("ε = {e:.3e} is below two grid cells ({:.3e})", 2.0 * h)));
        }
        let reach: Vec<i64> = hs.iter().map(|s| (e / s).floor() as i64).collect();
        let mut offsets = vec![];
        let mut k = vec![0i64; n];
        for (a, r) in reach.iter().enumerate() {
            k[a] = -r;
        }
        loop {
            let s2: f64 = k.iter().zip(&hs).map(|(&i, s)| (i as f64 * s).powi(2)).sum::<f64>() / (e * e);
            if s2 < 1.0 {
                offsets.push((k.clone(), (-1.0 / (1.0 - s2)).exp()));
            }
            let mut a = 0;
            while a < n {
                k[a] += 1;
                if k[a] <= reach[a] {
                    break;
                }
                k[a] = -reach[a];
                a += 1;
            }
            if a == n {
                break;
            }
        }
        let mut sum_q = 0.0;
        let mut inf = f64::INFINITY;
        for &i in &inner {
            let base = domain.multi_index(i);
            let (mut num, mut den) = (0.0, 0.0);
            for (off, w) in &offsets {
                let mut idx = 0i64;
                let mut inside = true;
                for a in 0..n {
                    let c = base[a] as i64 + off[a];
                    if c < 0 || c >= g {
                        inside = false;
                        break;
                    }
                    idx = idx * g + c;
                }
                if inside {
                    num += w * v[idx as usize];
                    den += w;
                }
            }
            let m = num / den;
            sum_q += m.powf(q_exponent);
            inf = inf.min(m);
        }
        let mean_q = (sum_q / inner.len() as f64).powf(1.0 / q_exponent);
        ratios.push(HarnackRatio {
            eps: e,
            mean_q,
            inf,
            ratio: mean_q / (inf + f_norm + 1e-12),
        });
    }
    let r: Vec<f64> = ratios.iter().map(|r| r.ratio).collect();
    Ok(HarnackReport {
        q_exponent,
        f_norm,
        bounded: ladder_bounded(&r, 4.0, 1e-6),
        ratios,
    })
}
