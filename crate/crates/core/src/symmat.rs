//! Dense symmetric spectral core.
//!
//! [`eigh`] is a cyclic Jacobi solver: slow for large matrices but accurate to
//! a few ulps in both eigenvalues and eigenvectors, and fully deterministic.
//! The rest of the module works with Hessian fields: the weighted eigenvalue
//! sum `Q^(ℓ)` and the first and second derivatives of simple eigenvalues.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::{Mat, SymMatrix, Tensor3, Tensor4};

/// Default degeneracy threshold factor: `δ_gap = 1e-6 · max(1, ‖A‖_F)`.
pub const DEFAULT_GAP_FACTOR: f64 = 1e-6;

pub fn default_delta_gap(a: &SymMatrix) -> f64 {
    DEFAULT_GAP_FACTOR * a.frobenius_norm().max(1.0)
}

/// Ascending eigenvalues with an orthonormal eigenvector frame (columns).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub frame: Mat,
    /// Smallest gap between adjacent eigenvalues (`+∞` when `n = 1`).
    pub gap_min: f64,
}

impl Spectrum {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvector(&self, j: usize) -> Vec<f64> {
        self.frame.column(j)
    }

    /// `V Λ Vᵀ`.
    pub fn reconstruct(&self) -> SymMatrix {
        SymMatrix::diag(&self.eigenvalues).conjugate(&self.frame.transpose())
    }
}

const MAX_SWEEPS: usize = 64;

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
pub fn eigh(a: &SymMatrix) -> Result<Spectrum> {
    if !a.is_finite() {
        return Err(Error::input("eigh: non-finite matrix entry"));
    }
    let n = a.n();
    let mut m: Vec<f64> = a.as_slice().to_vec();
    let mut v = Mat::identity(n);
    let scale = a.frobenius_norm();

    for sweep in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j].abs())
            .sum();
        if off == 0.0 || off <= f64::MIN_POSITIVE * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                // Off-diagonal entry below the resolution of both diagonal entries.
                let g = 100.0 * apq.abs();
                if sweep > 3 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    m[p * n + q] = 0.0;
                    m[q * n + p] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[i * n + i].total_cmp(&m[j * n + j]).then(i.cmp(&j)));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| m[i * n + i]).collect();
    let mut cols: Vec<Vec<f64>> = order.iter().map(|&i| v.column(i)).collect();
    for col in &mut cols {
        let mut lead = 0;
        for (k, x) in col.iter().enumerate() {
            if x.abs() > col[lead].abs() {
                lead = k;
            }
        }
        if col[lead] < 0.0 {
            col.iter_mut().for_each(|x| *x = -*x);
        }
    }
    let gap_min = eigenvalues
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    Ok(Spectrum {
        eigenvalues,
        frame: Mat::from_columns(&cols),
        gap_min,
    })
}

/// Weight of eigenvalue `j` (0-based) in `Q^(ℓ)`: `ℓ + 1 − (j+1) = ℓ − j`.
#[inline]
pub fn q_weight(ell: usize, j: usize) -> f64 {
    (ell - j) as f64
}

/// `Q^(ℓ) = Σ_{j=1}^{ℓ} (ℓ+1−j) λ_j` over ascending eigenvalues.
pub fn q_ell_values(eigenvalues: &[f64], ell: usize) -> Result<f64> {
    if ell == 0 || ell > eigenvalues.len() {
        return Err(Error::input(format!(
            "level {ell} out of range 1..={}",
            eigenvalues.len()
        )));
    }
    Ok((0..ell).map(|j| q_weight(ell, j) * eigenvalues[j]).sum())
}

pub fn q_ell(spec: &Spectrum, ell: usize) -> Result<f64> {
    q_ell_values(&spec.eigenvalues, ell)
}

/// `h(A) = Q^(ℓ)` evaluated directly on a matrix.
pub fn h_of_matrix(a: &SymMatrix, ell: usize) -> Result<f64> {
    q_ell(&eigh(a)?, ell)
}

/// Lipschitz constant of `h` with respect to the Frobenius norm used by the
/// property tests: `ℓ(ℓ+1)/2 · √n`.
pub fn h_lipschitz(n: usize, ell: usize) -> f64 {
    (ell * (ell + 1)) as f64 / 2.0 * (n as f64).sqrt()
}

/// Second- to fourth-order data of a field, expressed in the eigenframe of its
/// Hessian at one point.
#[derive(Debug, Clone)]
pub struct HessianEigenJet {
    pub spectrum: Spectrum,
    /// `P_abc` in eigenframe coordinates.
    pub d3: Tensor3,
    /// `P_abcd` in eigenframe coordinates.
    pub d4: Tensor4,
    pub delta_gap: f64,
    /// `gap_flags[j*n + m]` is set iff `|Λ_j − Λ_m| < δ_gap` (`j ≠ m`).
    gap_flags: Vec<bool>,
}

impl HessianEigenJet {
    /// Decomposes `d2` and rotates the higher tensors into its eigenframe.
    /// `delta_gap = None` uses [`default_delta_gap`].
    pub fn new(d2: &SymMatrix, d3: &Tensor3, d4: &Tensor4, delta_gap: Option<f64>) -> Result<Self> {
        let spectrum = eigh(d2)?;
        Ok(Self::from_spectrum(spectrum, d3, d4, delta_gap.unwrap_or_else(|| default_delta_gap(d2))))
    }

    pub fn from_spectrum(spectrum: Spectrum, d3: &Tensor3, d4: &Tensor4, delta_gap: f64) -> Self {
        let n = spectrum.n();
        let d3 = d3.rotate(&spectrum.frame);
        let d4 = d4.rotate(&spectrum.frame);
        let lam = &spectrum.eigenvalues;
        let mut gap_flags = vec![false; n * n];
        for j in 0..n {
            for m in 0..n {
                gap_flags[j * n + m] = j != m && (lam[j] - lam[m]).abs() < delta_gap;
            }
        }
        HessianEigenJet {
            spectrum,
            d3,
            d4,
            delta_gap,
            gap_flags,
        }
    }

    pub fn n(&self) -> usize {
        self.spectrum.n()
    }

    pub fn gap_flag(&self, j: usize, m: usize) -> bool {
        self.gap_flags[j * self.n() + m]
    }

    pub fn is_simple(&self, j: usize) -> bool {
        (0..self.n()).all(|m| !self.gap_flag(j, m))
    }

    /// True when no pair of eigenvalues is flagged.
    pub fn all_simple(&self) -> bool {
        !self.gap_flags.iter().any(|&f| f)
    }

    fn require_simple(&self, j: usize) -> Result<()> {
        let n = self.n();
        if j >= n {
            return Err(Error::input(format!("eigenvalue index {j} out of range 0..{n}")));
        }
        if !self.is_simple(j) {
            let lam = &self.spectrum.eigenvalues;
            let gap = (0..n)
                .filter(|&m| m != j)
                .map(|m| (lam[j] - lam[m]).abs())
                .fold(f64::INFINITY, f64::min);
            return Err(Error::Degenerate {
                index: j,
                gap,
                threshold: self.delta_gap,
            });
        }
        Ok(())
    }

    /// Maps an eigenframe vector back to world coordinates.
    pub fn to_world_vector(&self, v: &[f64]) -> Vec<f64> {
        self.spectrum.frame.mat_vec(v)
    }

    /// Maps an eigenframe matrix back to world coordinates (`V H Vᵀ`).
    pub fn to_world_matrix(&self, h: &SymMatrix) -> SymMatrix {
        h.conjugate(&self.spectrum.frame.transpose())
    }
}

/// Gradient of the simple eigenvalue `Λ_j` in eigenframe coordinates:
/// `(Λ_j)_a = P_jja`.
pub fn dlambda(jet: &HessianEigenJet, j: usize) -> Result<Vec<f64>> {
    jet.require_simple(j)?;
    Ok((0..jet.n()).map(|a| jet.d3.get(j, j, a)).collect())
}

/// Hessian of the simple eigenvalue `Λ_j` in eigenframe coordinates:
/// `(Λ_j)_ab = P_jjab + 2 Σ_{m≠j} P_maj P_mbj / (Λ_j − Λ_m)`.
pub fn d2lambda(jet: &HessianEigenJet, j: usize) -> Result<SymMatrix> {
    jet.require_simple(j)?;
    let n = jet.n();
    let lam = &jet.spectrum.eigenvalues;
    Ok(SymMatrix::from_fn(n, |a, b| {
        let mut s = jet.d4.get(j, j, a, b);
        for m in (0..n).filter(|&m| m != j) {
            s += 2.0 * jet.d3.get(m, a, j) * jet.d3.get(m, b, j) / (lam[j] - lam[m]);
        }
        s
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(rng: &mut ChaCha8Rng, n: usize) -> SymMatrix {
        SymMatrix::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn check_invariants(a: &SymMatrix, s: &Spectrum) {
        let n = a.n();
        let scale = a.frobenius_norm().max(1.0);
        assert!(s.reconstruct().sub(a).frobenius_norm() <= 1e-12 * scale);
        let vtv = SymMatrix::symmetrized(n, s.frame.transpose().mul(&s.frame).as_slice());
        assert!(vtv.sub(&SymMatrix::identity(n)).frobenius_norm() <= 1e-12);
        assert!(s.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        for j in 0..n {
            let col = s.eigenvector(j);
            let lead = col.iter().fold(0.0f64, |m, x| if x.abs() > m.abs() { *x } else { m });
            assert!(lead >= 0.0);
        }
    }

    #[test]
    fn diagonal_case() {
        let a = SymMatrix::diag(&[3.0, 1.0, 2.0]);
        let s = eigh(&a).unwrap();
        assert_eq!(s.eigenvalues, vec![1.0, 2.0, 3.0]);
        for j in 0..3 {
            let col = s.eigenvector(j);
            assert_eq!(col.iter().filter(|&&x| x == 1.0).count(), 1);
            assert_eq!(col.iter().filter(|&&x| x == 0.0).count(), 2);
        }
        assert_eq!(s.gap_min, 1.0);
    }

    #[test]
    fn swap_matrix() {
        let a = SymMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let s = eigh(&a).unwrap();
        assert!((s.eigenvalues[0] + 1.0).abs() < 1e-15);
        assert!((s.eigenvalues[1] - 1.0).abs() < 1e-15);
        check_invariants(&a, &s);
    }

    #[test]
    fn two_by_two_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let a = random_sym(&mut rng, 2);
            let (p, q, r) = (a.get(0, 0), a.get(0, 1), a.get(1, 1));
            let mean = 0.5 * (p + r);
            let rad = (0.25 * (p - r) * (p - r) + q * q).sqrt();
            let s = eigh(&a).unwrap();
            assert!((s.eigenvalues[0] - (mean - rad)).abs() < 1e-12);
            assert!((s.eigenvalues[1] - (mean + rad)).abs() < 1e-12);
        }
    }

    #[test]
    fn random_invariants_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 1..=8 {
            for _ in 0..20 {
                let a = random_sym(&mut rng, n).scaled(rng.gen_range(0.1..100.0));
                let s = eigh(&a).unwrap();
                check_invariants(&a, &s);
                assert_eq!(s, eigh(&a).unwrap());
            }
        }
    }

    #[test]
    fn repeated_eigenvalues() {
        let a = SymMatrix::identity(4).scaled(2.5);
        let s = eigh(&a).unwrap();
        assert_eq!(s.gap_min, 0.0);
        check_invariants(&a, &s);
    }

    #[test]
    fn rejects_non_finite() {
        let mut a = SymMatrix::identity(2);
        a.set(0, 1, f64::INFINITY);
        assert!(matches!(eigh(&a), Err(Error::Input(_))));
    }

    #[test]
    fn q_ell_examples() {
        assert_eq!(q_ell_values(&[5.0, 6.0], 1).unwrap(), 5.0);
        assert_eq!(q_ell_values(&[1.0, 2.0, 4.0], 2).unwrap(), 4.0);
        assert_eq!(q_ell_values(&[0.0, 0.0, 7.0], 2).unwrap(), 0.0);
        assert!(q_ell_values(&[1.0, 2.0], 0).is_err());
        assert!(q_ell_values(&[1.0, 2.0], 3).is_err());
    }

    #[test]
    fn degenerate_index_is_rejected() {
        let jet = HessianEigenJet::new(
            &SymMatrix::identity(3),
            &Tensor3::zeros(3),
            &Tensor4::zeros(3),
            None,
        )
        .unwrap();
        assert!(matches!(dlambda(&jet, 0), Err(Error::Degenerate { .. })));
        assert!(matches!(d2lambda(&jet, 2), Err(Error::Degenerate { .. })));
        assert!(!jet.all_simple());
    }

    #[test]
    fn quadratic_field_has_flat_eigenvalues() {
        let jet = HessianEigenJet::new(
            &SymMatrix::diag(&[1.0, 2.0, 5.0]),
            &Tensor3::zeros(3),
            &Tensor4::zeros(3),
            None,
        )
        .unwrap();
        for j in 0..3 {
            assert!(dlambda(&jet, j).unwrap().iter().all(|&g| g == 0.0));
            assert_eq!(d2lambda(&jet, j).unwrap().max_abs(), 0.0);
        }
    }
}
