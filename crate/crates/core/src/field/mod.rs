//! Scalar fields with derivative queries through fourth order.

mod analytic;
mod fit;
mod grid;
pub mod io;
mod polynomial;

pub use analytic::RadialField;
pub use fit::{distinct_positive_fraction, fit_polynomial, perturb_to_distinct, FitReport, PerturbReport};
pub use grid::GridField;
pub use polynomial::{monomial_count, monomials, Polynomial, MAX_DEGREE};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{SymMatrix, Tensor3, Tensor4};

/// Axis-aligned box with a uniform sample grid of `grid_per_axis` points per
/// axis (endpoints included).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub center: Vec<f64>,
    pub half_width: Vec<f64>,
    pub grid_per_axis: usize,
}

impl BoxDomain {
    pub fn new(center: Vec<f64>, half_width: Vec<f64>, grid_per_axis: usize) -> Result<Self> {
        if center.is_empty() || center.len() != half_width.len() {
            return Err(Error::input("box center/half_width dimension mismatch"));
        }
        if half_width.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::input("box half-widths must be positive and finite"));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::input("box center must be finite"));
        }
        if grid_per_axis < 3 {
            return Err(Error::input("box needs at least 3 grid points per axis"));
        }
        Ok(BoxDomain {
            center,
            half_width,
            grid_per_axis,
        })
    }

    pub fn cube(center: Vec<f64>, half_width: f64, grid_per_axis: usize) -> Result<Self> {
        let n = center.len();
        Self::new(center, vec![half_width; n], grid_per_axis)
    }

    pub fn n(&self) -> usize {
        self.center.len()
    }

    pub fn len(&self) -> usize {
        self.grid_per_axis.pow(self.n() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        2.0 * self.half_width[axis] / (self.grid_per_axis - 1) as f64
    }

    /// Common spacing when all axes agree (to rounding).
    pub fn uniform_spacing(&self) -> Result<f64> {
        let h0 = self.spacing(0);
        if (1..self.n()).any(|i| (self.spacing(i) - h0).abs() > 1e-12 * h0) {
            return Err(Error::input("box spacing differs between axes"));
        }
        Ok(h0)
    }

    pub fn lower_corner(&self) -> Vec<f64> {
        self.center.iter().zip(&self.half_width).map(|(c, w)| c - w).collect()
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.half_width.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let n = self.n();
        let g = self.grid_per_axis;
        let mut k = vec![0; n];
        for i in (0..n).rev() {
            k[i] = idx % g;
            idx /= g;
        }
        k
    }

    /// Grid point `idx` in row-major order (first axis slowest).
    pub fn point(&self, idx: usize) -> Vec<f64> {
        let k = self.multi_index(idx);
        (0..self.n())
            .map(|i| self.center[i] - self.half_width[i] + k[i] as f64 * self.spacing(i))
            .collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.center)
            .zip(&self.half_width)
            .all(|((x, c), w)| (x - c).abs() <= w * (1.0 + 1e-12))
    }

    /// Concentric box with half-widths scaled by `factor`.
    pub fn shrunk(&self, factor: f64, grid_per_axis: usize) -> Result<Self> {
        Self::new(
            self.center.clone(),
            self.half_width.iter().map(|w| w * factor).collect(),
            grid_per_axis,
        )
    }

    /// Indices of grid points within the concentric box scaled by `factor`.
    pub fn inner_indices(&self, factor: f64) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| {
                let x = self.point(i);
                x.iter()
                    .zip(&self.center)
                    .zip(&self.half_width)
                    .all(|((x, c), w)| (x - c).abs() <= factor * w * (1.0 + 1e-12))
            })
            .collect()
    }

    /// Uniform random point, deterministic in `(seed, counter)`.
    pub fn random_point(&self, seed: u64, counter: u64) -> Vec<f64> {
        let mut rng = counter_rng(seed, counter);
        self.center
            .iter()
            .zip(&self.half_width)
            .map(|(c, w)| c + w * rng.gen_range(-1.0..=1.0))
            .collect()
    }
}

/// RNG for trial `counter` of a run seeded by `seed`; independent of scheduling.
pub fn counter_rng(seed: u64, counter: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(counter);
    rng
}

/// Value and derivatives through fourth order at a point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Jet4 {
    pub x: Vec<f64>,
    pub u: f64,
    pub du: Vec<f64>,
    pub d2u: SymMatrix,
    pub d3u: Tensor3,
    pub d4u: Tensor4,
}

impl Jet4 {
    pub fn n(&self) -> usize {
        self.x.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarField {
    Radial(RadialField),
    Polynomial(Polynomial),
    Grid(GridField),
}

impl ScalarField {
    pub fn n(&self) -> usize {
        match self {
            ScalarField::Radial(f) => f.n,
            ScalarField::Polynomial(p) => p.n(),
            ScalarField::Grid(g) => g.n(),
        }
    }

    /// Jets are exact to rounding (analytic or polynomial).
    pub fn is_exact(&self) -> bool {
        !matches!(self, ScalarField::Grid(_))
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::input(format!("point has dimension {}, field has {}", x.len(), self.n())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("non-finite point"));
        }
        Ok(())
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        match self {
            ScalarField::Radial(f) => f.value(x),
            ScalarField::Polynomial(p) => Ok(p.value(x)),
            ScalarField::Grid(g) => g.value(x),
        }
    }

    pub fn hessian(&self, x: &[f64]) -> Result<SymMatrix> {
        self.check_dim(x)?;
        match self {
            ScalarField::Radial(f) => f.hessian(x),
            ScalarField::Polynomial(p) => Ok(p.hessian(x)),
            ScalarField::Grid(g) => g.hessian(x),
        }
    }

    pub fn jet4(&self, x: &[f64]) -> Result<Jet4> {
        self.check_dim(x)?;
        match self {
            ScalarField::Radial(f) => f.jet4(x),
            ScalarField::Polynomial(p) => Ok(p.jet4(x)),
            ScalarField::Grid(g) => g.jet4(x),
        }
    }

    /// Checks that `domain` lies inside the field's validity region.
    pub fn validate_box(&self, domain: &BoxDomain) -> Result<()> {
        if domain.n() != self.n() {
            return Err(Error::input("box and field dimensions differ"));
        }
        match self {
            ScalarField::Radial(_) => {
                let separated = domain
                    .center
                    .iter()
                    .zip(&domain.half_width)
                    .any(|(c, w)| c.abs() > *w);
                if !separated {
                    return Err(Error::domain("box contains the origin, where |x| is not smooth"));
                }
                Ok(())
            }
            ScalarField::Polynomial(_) => Ok(()),
            ScalarField::Grid(g) => {
                for x in [domain.point(0), domain.point(domain.len() - 1)] {
                    g.locate(&x)?;
                }
                g.locate(&domain.point(1))?;
                Ok(())
            }
        }
    }

    pub fn as_polynomial(&self) -> Option<&Polynomial> {
        match self {
            ScalarField::Polynomial(p) => Some(p),
            _ => None,
        }
    }
}

/// Names accepted by [`builtin_field`].
pub const BUILTIN_FIELDS: &[&str] = &["radial_r", "quadratic", "rank1", "convex_poly", "custom"];

/// Catalog of analytic test fields.
///
/// - `radial_r`: `s·|x|`, params `[s]` (default `s = 1`).
/// - `quadratic`: `Σ c_i x_i²/2`, params `c` (length `n`).
/// - `rank1`: `c·x₁²/2`, params `[c]`.
/// - `convex_poly`: seeded convex polynomial, params `[seed, degree]`; convex
///   on all of `Rⁿ`, declared box `[-1, 1]ⁿ` (see [`convex_poly_box`]).
/// - `custom`: params `[degree, c₀, c₁, …]`, coefficients in graded-lex order.
pub fn builtin_field(name: &str, params: &[f64], n: usize) -> Result<ScalarField> {
    if n == 0 {
        return Err(Error::input("field dimension must be positive"));
    }
    match name {
        "radial_r" => {
            let s = params.first().copied().unwrap_or(1.0);
            Ok(ScalarField::Radial(RadialField::new(n, s)?))
        }
        "quadratic" => {
            if params.len() != n {
                return Err(Error::input(format!("quadratic needs {n} coefficients, got {}", params.len())));
            }
            Ok(ScalarField::Polynomial(Polynomial::diagonal_quadratic(params, vec![0.0; n])?))
        }
        "rank1" => {
            let c = params.first().copied().unwrap_or(1.0);
            let mut diag = vec![0.0; n];
            diag[0] = c;
            Ok(ScalarField::Polynomial(Polynomial::diagonal_quadratic(&diag, vec![0.0; n])?))
        }
        "convex_poly" => {
            let seed = params.first().copied().unwrap_or(0.0);
            let degree = params.get(1).copied().unwrap_or(4.0);
            if seed < 0.0 || seed.fract() != 0.0 || degree.fract() != 0.0 || !(2.0..=8.0).contains(&degree) {
                return Err(Error::input("convex_poly needs an integer seed ≥ 0 and integer degree in 2..=8"));
            }
            Ok(ScalarField::Polynomial(convex_poly(n, seed as u64, degree as usize)?))
        }
        "custom" => {
            let degree = params
                .first()
                .copied()
                .filter(|d| d.fract() == 0.0 && *d >= 0.0)
                .ok_or_else(|| Error::input("custom field needs [degree, coefficients…]"))?;
            Ok(ScalarField::Polynomial(Polynomial::with_coefficients(
                n,
                degree as usize,
                vec![0.0; n],
                params[1..].to_vec(),
            )?))
        }
        other => Err(Error::input(format!("unknown builtin field '{other}'"))),
    }
}

/// Declared box of `convex_poly`.
pub fn convex_poly_box(n: usize, grid_per_axis: usize) -> Result<BoxDomain> {
    BoxDomain::cube(vec![0.0; n], 1.0, grid_per_axis)
}

/// `½xᵀMx + Σ_k w_k (a_k·x + b_k)^{2m}` with `M` positive definite and `2m`
/// the largest even number `≤ degree`: a sum of convex terms.
fn convex_poly(n: usize, seed: u64, degree: usize) -> Result<Polynomial> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let m = SymMatrix::from_fn(n, |i, j| {
        (0..n).map(|k| g[k * n + i] * g[k * n + j]).sum::<f64>() / n as f64 + if i == j { 0.1 } else { 0.0 }
    });
    let mut p = Polynomial::quadratic_form(&m, vec![0.0; n])?;
    let power = degree - degree % 2;
    for _ in 0..=n {
        let mut terms: Vec<(Vec<u32>, f64)> = (0..n)
            .map(|i| {
                let mut e = vec![0; n];
                e[i] = 1;
                (e, rng.gen_range(-1.0..1.0))
            })
            .collect();
        terms.push((vec![0; n], rng.gen_range(-0.5..0.5)));
        let affine = Polynomial::from_terms(n, vec![0.0; n], &terms)?;
        let mut pow = affine.clone();
        for _ in 1..power {
            pow = pow.mul(&affine)?;
        }
        p = p.add(&pow.scaled(rng.gen_range(0.05..0.2)))?;
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symmat::eigh;

    #[test]
    fn box_points_are_row_major() {
        let b = BoxDomain::cube(vec![0.0, 0.0], 1.0, 3).unwrap();
        assert_eq!(b.point(0), vec![-1.0, -1.0]);
        assert_eq!(b.point(1), vec![-1.0, 0.0]);
        assert_eq!(b.point(3), vec![0.0, -1.0]);
        assert_eq!(b.len(), 9);
        assert_eq!(b.inner_indices(0.5), vec![4]);
    }

    #[test]
    fn builtin_catalog() {
        let r = builtin_field("radial_r", &[], 2).unwrap();
        assert_eq!(r.value(&[2.0, 0.0]).unwrap(), 2.0);
        let q = builtin_field("quadratic", &[1.0, 2.0, 3.0], 3).unwrap();
        assert_eq!(q.hessian(&[0.3, 0.1, -2.0]).unwrap(), SymMatrix::diag(&[1.0, 2.0, 3.0]));
        let j = builtin_field("rank1", &[2.0], 3).unwrap().jet4(&[0.5, 1.0, 1.0]).unwrap();
        assert_eq!(j.d2u, SymMatrix::diag(&[2.0, 0.0, 0.0]));
        assert!(builtin_field("nope", &[], 2).is_err());
        assert!(builtin_field("quadratic", &[1.0], 2).is_err());
    }

    #[test]
    fn convex_poly_is_convex_on_its_box() {
        let f = builtin_field("convex_poly", &[7.0, 4.0], 2).unwrap();
        let b = convex_poly_box(2, 21).unwrap();
        let min = b
            .points()
            .iter()
            .map(|x| eigh(&f.hessian(x).unwrap()).unwrap().eigenvalues[0])
            .fold(f64::INFINITY, f64::min);
        assert!(min >= 0.0, "min eigenvalue {min}");
        assert_eq!(f.as_polynomial().unwrap().degree(), 4);
    }

    #[test]
    fn radial_box_must_avoid_origin() {
        let r = builtin_field("radial_r", &[], 2).unwrap();
        assert!(r.validate_box(&BoxDomain::cube(vec![2.0, 0.0], 0.3, 5).unwrap()).is_ok());
        assert!(r.validate_box(&BoxDomain::cube(vec![0.1, 0.0], 0.3, 5).unwrap()).is_err());
    }
}
