use rand::Rng;
use serde::Serialize;

use super::{form_coordinates, spd_inverse, FormVector, Operator, OperatorState};
use crate::error::{Error, Result};
use crate::exec::{try_map_indexed, Execution};
use crate::field::counter_rng;
use crate::symmat::eigh;
use crate::tensor::SymMatrix;

/// Argument `(B, u, x)` of `G(B, u, x) = F(B⁻¹, p, u, x)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexPoint {
    pub b: SymMatrix,
    pub u: f64,
    pub x: Vec<f64>,
}

impl ConvexPoint {
    pub fn midpoint(&self, other: &ConvexPoint) -> ConvexPoint {
        ConvexPoint {
            b: self.b.add(&other.b).scaled(0.5),
            u: 0.5 * (self.u + other.u),
            x: self.x.iter().zip(&other.x).map(|(a, b)| 0.5 * (a + b)).collect(),
        }
    }
}

pub fn g_value(op: &Operator, p: &[f64], pt: &ConvexPoint) -> Result<f64> {
    let a = spd_inverse(&pt.b).map_err(|e| Error::Singular(format!("sampler produced a singular A: {e}")))?;
    op.value(&OperatorState::new(a, p.to_vec(), pt.u, pt.x.clone())?)
}

/// Source of point pairs; trial `i` must depend only on `i` and the seed.
pub trait PairSampler: Sync {
    fn pair(&self, trial: u64) -> (ConvexPoint, ConvexPoint);
}

/// Independent pairs: `B = R diag(λ) Rᵀ` with `λ` uniform in `eig_range`
/// and a random rotation `R`, `u` and `x` uniform in boxes.
#[derive(Debug, Clone)]
pub struct RegionSampler {
    pub n: usize,
    pub eig_range: (f64, f64),
    pub u_range: (f64, f64),
    pub x_center: Vec<f64>,
    pub x_radius: f64,
    pub seed: u64,
}

fn random_rotation(rng: &mut impl Rng, n: usize) -> crate::tensor::Mat {
    let m = SymMatrix::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    eigh(&m).expect("finite matrix").frame
}

impl RegionSampler {
    fn point(&self, rng: &mut impl Rng) -> ConvexPoint {
        let lam: Vec<f64> = (0..self.n).map(|_| rng.gen_range(self.eig_range.0..=self.eig_range.1)).collect();
        let r = random_rotation(rng, self.n);
        ConvexPoint {
            b: SymMatrix::diag(&lam).conjugate(&r.transpose()),
            u: rng.gen_range(self.u_range.0..=self.u_range.1),
            x: self
                .x_center
                .iter()
                .map(|c| c + rng.gen_range(-self.x_radius..=self.x_radius))
                .collect(),
        }
    }
}

impl PairSampler for RegionSampler {
    fn pair(&self, trial: u64) -> (ConvexPoint, ConvexPoint) {
        let mut rng = counter_rng(self.seed, trial);
        (self.point(&mut rng), self.point(&mut rng))
    }
}

/// Pairs `c ± d` symmetric about a fixed point `c`, with `d` uniform on the
/// sphere of radius `radius` in the orthonormal `(B, x, u)` coordinates.
#[derive(Debug, Clone)]
pub struct NeighborhoodSampler {
    pub center: ConvexPoint,
    pub radius: f64,
    pub seed: u64,
}

impl NeighborhoodSampler {
    /// Neighborhood of `B = A⁻¹` for the state `s`; the radius is
    /// `rel · min(1, λ_min(B))` so both ends stay positive definite.
    pub fn around_state(s: &OperatorState, rel: f64, seed: u64) -> Result<Self> {
        if !(rel > 0.0 && rel < 1.0) {
            return Err(Error::input("relative neighborhood radius must lie in (0, 1)"));
        }
        let b = spd_inverse(&s.a)?;
        let lmin = eigh(&b)?.eigenvalues[0];
        Ok(NeighborhoodSampler {
            center: ConvexPoint {
                b,
                u: s.u,
                x: s.x.clone(),
            },
            radius: rel * lmin.min(1.0),
            seed,
        })
    }
}

impl NeighborhoodSampler {
    /// The pair `c ± radius·d/|d|` for a direction given in coordinates.
    pub fn pair_along(&self, dir: &[f64]) -> (ConvexPoint, ConvexPoint) {
        let n = self.center.x.len();
        let len = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        let c: Vec<f64> = dir.iter().map(|v| v * self.radius / len).collect();
        let d = FormVector::from_coords(n, &c);
        let at = |s: f64| ConvexPoint {
            b: self.center.b.add(&d.x.scaled(s)),
            u: self.center.u + s * d.y,
            x: self.center.x.iter().zip(&d.z).map(|(a, b)| a + s * b).collect(),
        };
        (at(1.0), at(-1.0))
    }

    fn random_direction(&self, rng: &mut impl Rng) -> Vec<f64> {
        (0..form_coordinates(self.center.x.len())).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }
}

impl PairSampler for NeighborhoodSampler {
    fn pair(&self, trial: u64) -> (ConvexPoint, ConvexPoint) {
        let mut rng = counter_rng(self.seed, trial);
        let d = self.random_direction(&mut rng);
        self.pair_along(&d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexityCheck {
    pub trials: usize,
    /// `max_i G(mid_i) − (G(s₁) + G(s₂))/2`.
    pub max_violation: f64,
    pub witness_trial: usize,
    pub witness: (ConvexPoint, ConvexPoint),
}

impl ConvexityCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_violation <= tol
    }
}

pub fn direct_convexity_check(
    op: &Operator,
    p: &[f64],
    sampler: &dyn PairSampler,
    trials: usize,
    exec: Execution,
) -> Result<ConvexityCheck> {
    if trials == 0 {
        return Err(Error::input("convexity check needs at least one trial"));
    }
    let violations = try_map_indexed(exec, trials, |i| midpoint_violation(op, p, &sampler.pair(i as u64)))?;
    let (witness_trial, max_violation) = violations
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, v)| if v > bv { (i, v) } else { (bi, bv) });
    Ok(ConvexityCheck {
        trials,
        max_violation,
        witness_trial,
        witness: sampler.pair(witness_trial as u64),
    })
}

fn midpoint_violation(op: &Operator, p: &[f64], pair: &(ConvexPoint, ConvexPoint)) -> Result<f64> {
    let (s1, s2) = pair;
    Ok(g_value(op, p, &s1.midpoint(s2))? - 0.5 * (g_value(op, p, s1)? + g_value(op, p, s2)?))
}

/// Multi-start (1+1) evolution strategy over directions of a neighborhood
/// sampler, maximizing the midpoint violation. Uses values of `G` only.
///
/// A thin cone of non-convex directions is rarely hit by uniform sampling;
/// the violation is a smooth function of the direction, so hill climbing on
/// the sphere finds it.
pub fn adaptive_convexity_search(
    op: &Operator,
    p: &[f64],
    sampler: &NeighborhoodSampler,
    starts: usize,
    iters: usize,
    exec: Execution,
) -> Result<ConvexityCheck> {
    if starts == 0 {
        return Err(Error::input("adaptive search needs at least one start"));
    }
    let runs = try_map_indexed(exec, starts, |k| {
        let mut rng = counter_rng(sampler.seed ^ 0x5eed_ad47, k as u64);
        let mut d = sampler.random_direction(&mut rng);
        let mut best = midpoint_violation(op, p, &sampler.pair_along(&d))?;
        let mut step = 0.3;
        for _ in 0..iters {
            let cand: Vec<f64> = d.iter().map(|v| v + step * rng.gen_range(-1.0..1.0)).collect();
            let v = midpoint_violation(op, p, &sampler.pair_along(&cand))?;
            if v > best {
                best = v;
                let len = cand.iter().map(|t| t * t).sum::<f64>().sqrt();
                d = cand.iter().map(|t| t / len).collect();
                step = (step * 1.5).min(1.0);
            } else {
                step = (step * 0.9).max(1e-4);
            }
        }
        Ok((best, d))
    })?;
    let (k, (v, d)) = runs
        .iter()
        .enumerate()
        .fold((0, &runs[0]), |acc, (i, r)| if r.0 > acc.1 .0 { (i, r) } else { acc });
    Ok(ConvexityCheck {
        trials: starts * (iters + 1),
        max_violation: *v,
        witness_trial: k,
        witness: sampler.pair_along(d),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn region(n: usize, seed: u64) -> RegionSampler {
        RegionSampler {
            n,
            eig_range: (0.2, 3.0),
            u_range: (-1.0, 1.0),
            x_center: vec![1.0; n],
            x_radius: 0.5,
            seed,
        }
    }

    #[test]
    fn logdet_and_trace_laplace_are_convex() {
        for op in [Operator::LogDet { c: 0.3 }, Operator::TraceLaplace { c: 1.0 }] {
            let r = direct_convexity_check(&op, &[0.0; 3], &region(3, 5), 10_000, Execution::Parallel).unwrap();
            assert!(r.max_violation <= 1e-10, "{op:?}: {}", r.max_violation);
        }
    }

    #[test]
    fn neg_trace_is_caught() {
        let r = direct_convexity_check(&Operator::NegTrace, &[0.0; 2], &region(2, 1), 200, Execution::Sequential).unwrap();
        assert!(r.max_violation > 0.0);
        let (a, b) = &r.witness;
        let op = Operator::NegTrace;
        let v = g_value(&op, &[0.0; 2], &a.midpoint(b)).unwrap()
            - 0.5 * (g_value(&op, &[0.0; 2], a).unwrap() + g_value(&op, &[0.0; 2], b).unwrap());
        assert_eq!(v, r.max_violation);
    }

    #[test]
    fn singular_points_are_errors() {
        let pt = ConvexPoint {
            b: SymMatrix::diag(&[1.0, 0.0]),
            u: 0.0,
            x: vec![1.0, 0.0],
        };
        assert!(matches!(g_value(&Operator::NegTrace, &[0.0; 2], &pt), Err(Error::Singular(_))));
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let op = Operator::Example33;
        let s = region(2, 9);
        let a = direct_convexity_check(&op, &[0.0; 2], &s, 500, Execution::Parallel).unwrap();
        let b = direct_convexity_check(&op, &[0.0; 2], &s, 500, Execution::Sequential).unwrap();
        assert_eq!(a, b);
    }
}
