//! The structural quadratic form on `(X, Z, Y) ∈ Sym(n) × Rⁿ × R`.
//!
//! Coordinates: the `X` block lists `X_ab` for `a ≤ b` row by row, with
//! off-diagonal entries carrying a factor `√2` so that the coordinate norm is
//! the Frobenius norm; then `Z_1..Z_n`; then `Y`.

use serde::Serialize;

use super::OperatorJet;
use crate::error::{Error, Result};
use crate::symmat::eigh;
use crate::tensor::SymMatrix;

/// Dimension of `(X, Z, Y)` space: `n(n+1)/2 + n + 1`.
pub fn form_coordinates(n: usize) -> usize {
    n * (n + 1) / 2 + n + 1
}

fn x_dim(n: usize) -> usize {
    n * (n + 1) / 2
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FormVector {
    pub x: SymMatrix,
    pub z: Vec<f64>,
    pub y: f64,
}

impl FormVector {
    pub fn zeros(n: usize) -> Self {
        FormVector {
            x: SymMatrix::zeros(n),
            z: vec![0.0; n],
            y: 0.0,
        }
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn from_coords(n: usize, c: &[f64]) -> Self {
        let mut v = Self::zeros(n);
        let mut k = 0;
        for a in 0..n {
            for b in a..n {
                v.x.set(a, b, if a == b { c[k] } else { c[k] / std::f64::consts::SQRT_2 });
                k += 1;
            }
        }
        v.z.copy_from_slice(&c[k..k + n]);
        v.y = c[k + n];
        v
    }

    pub fn coords(&self) -> Vec<f64> {
        let n = self.n();
        let mut c = Vec::with_capacity(form_coordinates(n));
        for a in 0..n {
            for b in a..n {
                let v = self.x.get(a, b);
                c.push(if a == b { v } else { v * std::f64::consts::SQRT_2 });
            }
        }
        c.extend_from_slice(&self.z);
        c.push(self.y);
        c
    }
}

fn sym_product_trace(f: &SymMatrix, x: &SymMatrix, ainv: &SymMatrix) -> f64 {
    // tr(F X A⁻¹ X)
    let n = f.n();
    let mut xa = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            xa[i * n + j] = (0..n).map(|k| x.get(i, k) * ainv.get(k, j)).sum();
        }
    }
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            let xax: f64 = (0..n).map(|k| xa[i * n + k] * x.get(k, j)).sum();
            s += f.get(j, i) * xax;
        }
    }
    s
}

/// The seven-term form
/// `F^{ab,rs}X_ab X_rs + 2F^{ar}A^{bs}X_ab X_rs + F^{x_a x_b}Z_a Z_b
///  − 2F^{ab,u}X_ab Y − 2F^{ab,x_r}X_ab Z_r + 2F^{u,x_a}Y Z_a + F^{uu}Y²`.
pub fn keyco_form(j: &OperatorJet, x: &SymMatrix, z: &[f64], y: f64) -> Result<f64> {
    let ainv = j
        .ainv
        .as_ref()
        .ok_or_else(|| Error::Singular("structural form needs an invertible A".into()))?;
    let n = j.n();
    let t1 = j.fabrs.bilinear(x, x);
    let t2 = 2.0 * sym_product_trace(&j.fab, x, ainv);
    let t3 = j.fxx.quad_form(z);
    let t4 = -2.0 * j.fab_u.contract(x) * y;
    let mut t5 = 0.0;
    for a in 0..n {
        for b in 0..n {
            for r in 0..n {
                t5 += j.fab_x.get(a, b, r) * x.get(a, b) * z[r];
            }
        }
    }
    let t6 = 2.0 * y * j.fux.iter().zip(z).map(|(a, b)| a * b).sum::<f64>();
    let t7 = j.fuu * y * y;
    Ok(t1 + t2 + t3 + t4 - 2.0 * t5 + t6 + t7)
}

fn form_at(j: &OperatorJet, c: &[f64]) -> Result<f64> {
    let v = FormVector::from_coords(j.n(), c);
    keyco_form(j, &v.x, &v.z, v.y)
}

/// Assembles the form matrix by polarization.
pub fn form_matrix(j: &OperatorJet) -> Result<SymMatrix> {
    let dim = form_coordinates(j.n());
    let mut diag = vec![0.0; dim];
    let mut e = vec![0.0; dim];
    for i in 0..dim {
        e[i] = 1.0;
        diag[i] = form_at(j, &e)?;
        e[i] = 0.0;
    }
    let mut m = SymMatrix::zeros(dim);
    for i in 0..dim {
        m.set(i, i, diag[i]);
        for k in (i + 1)..dim {
            e[i] = 1.0;
            e[k] = 1.0;
            let plus = form_at(j, &e)?;
            e[k] = -1.0;
            let minus = form_at(j, &e)?;
            e[i] = 0.0;
            e[k] = 0.0;
            m.set(i, k, 0.25 * (plus - minus));
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaStatus {
    /// `(Z, Y)` block positive definite; plain Schur complement.
    Schur,
    /// `(Z, Y)` block singular, coupling consistent; Schur complement on its range.
    SingularConsistent,
    /// A null direction of the `(Z, Y)` block couples to `X`; `η = −∞`.
    Inconsistent,
    /// `(Z, Y)` block has a negative direction; `η = −∞`.
    Indefinite,
}

/// Largest `η` with `form(X, Z, Y) ≥ η|X|²` for all arguments.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrictEta {
    pub eta: f64,
    pub status: EtaStatus,
    /// Argument attaining `η` (unit `X`), or a direction where the form is
    /// negative while `|X|` is bounded.
    pub witness: FormVector,
    pub witness_value: f64,
    pub zy_min_eigenvalue: f64,
}

impl StrictEta {
    pub fn holds(&self, tol: f64) -> bool {
        self.eta > tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FormSpectrum {
    pub dimension: usize,
    pub matrix: SymMatrix,
    pub min_eigenvalue: f64,
    pub minimizer: FormVector,
    /// Smallest eigenvalue of the form restricted to `X` (`Z = 0, Y = 0`).
    pub x_block_min_eigenvalue: f64,
    pub eta: StrictEta,
}

pub fn form_spectrum(j: &OperatorJet) -> Result<FormSpectrum> {
    let n = j.n();
    let m = form_matrix(j)?;
    let s = eigh(&m)?;
    let mx = x_dim(n);
    let xblock = SymMatrix::from_fn(mx, |a, b| m.get(a, b));
    Ok(FormSpectrum {
        dimension: m.n(),
        min_eigenvalue: s.eigenvalues[0],
        minimizer: FormVector::from_coords(n, &s.eigenvector(0)),
        x_block_min_eigenvalue: eigh(&xblock)?.eigenvalues[0],
        eta: eta_from_matrix(n, &m)?,
        matrix: m,
    })
}

pub fn strict_eta(j: &OperatorJet) -> Result<StrictEta> {
    eta_from_matrix(j.n(), &form_matrix(j)?)
}

fn eta_from_matrix(n: usize, m: &SymMatrix) -> Result<StrictEta> {
    let dim = m.n();
    let mx = x_dim(n);
    let mw = dim - mx;
    let scale = m.max_abs().max(1.0);
    let tol = 1e-10 * scale;
    let quad = |c: &[f64]| m.quad_form(c);
    let embed = |xc: &[f64], wc: &[f64]| -> Vec<f64> { xc.iter().chain(wc).copied().collect() };

    let ww = SymMatrix::from_fn(mw, |a, b| m.get(mx + a, mx + b));
    let ws = eigh(&ww)?;
    let zy_min = ws.eigenvalues[0];
    if zy_min < -tol {
        let c = embed(&vec![0.0; mx], &ws.eigenvector(0));
        return Ok(StrictEta {
            eta: f64::NEG_INFINITY,
            status: EtaStatus::Indefinite,
            witness_value: quad(&c),
            witness: FormVector::from_coords(n, &c),
            zy_min_eigenvalue: zy_min,
        });
    }
    // coupling[w][x] = M_{w,x}
    let coupling = |w: &[f64], xk: usize| -> f64 { (0..mw).map(|i| w[i] * m.get(mx + i, xk)).sum() };
    let null: Vec<Vec<f64>> = (0..mw)
        .filter(|&i| ws.eigenvalues[i].abs() <= tol)
        .map(|i| ws.eigenvector(i))
        .collect();

    // K = Nᵀ C; inconsistent if some null direction sees X.
    let ktk = SymMatrix::from_fn(mx, |a, b| null.iter().map(|v| coupling(v, a) * coupling(v, b)).sum());
    let ks = eigh(&ktk)?;
    let kmax = ks.eigenvalues[mx - 1].max(0.0).sqrt();
    if !null.is_empty() && kmax > 1e-8 * scale {
        let xc = ks.eigenvector(mx - 1);
        let mut wdir = vec![0.0; mw];
        for v in &null {
            let k: f64 = (0..mx).map(|a| coupling(v, a) * xc[a]).sum();
            for i in 0..mw {
                wdir[i] += k * v[i];
            }
        }
        let cross: f64 = (0..mx).map(|a| coupling(&wdir, a) * xc[a]).sum();
        let xx = quad(&embed(&xc, &vec![0.0; mw]));
        let s = -(xx.abs() + 1.0) / cross;
        let wc: Vec<f64> = wdir.iter().map(|v| s * v).collect();
        let c = embed(&xc, &wc);
        return Ok(StrictEta {
            eta: f64::NEG_INFINITY,
            status: EtaStatus::Inconsistent,
            witness_value: quad(&c),
            witness: FormVector::from_coords(n, &c),
            zy_min_eigenvalue: zy_min,
        });
    }

    // Pseudo-inverse of the (Z, Y) block on its range.
    let mut pinv = vec![0.0; mw * mw];
    for i in 0..mw {
        let mu = ws.eigenvalues[i];
        if mu.abs() <= tol {
            continue;
        }
        let v = ws.eigenvector(i);
        for a in 0..mw {
            for b in 0..mw {
                pinv[a * mw + b] += v[a] * v[b] / mu;
            }
        }
    }
    // G = M_ww⁺ M_wx (mw × mx)
    let mut g = vec![0.0; mw * mx];
    for a in 0..mw {
        for k in 0..mx {
            g[a * mx + k] = (0..mw).map(|b| pinv[a * mw + b] * m.get(mx + b, k)).sum();
        }
    }
    let schur = SymMatrix::from_fn(mx, |a, b| {
        m.get(a, b) - (0..mw).map(|i| m.get(a, mx + i) * g[i * mx + b]).sum::<f64>()
    });
    let ss = eigh(&schur)?;
    let xc = ss.eigenvector(0);
    let wc: Vec<f64> = (0..mw).map(|a| -(0..mx).map(|k| g[a * mx + k] * xc[k]).sum::<f64>()).collect();
    let c = embed(&xc, &wc);
    Ok(StrictEta {
        eta: ss.eigenvalues[0],
        status: if null.is_empty() {
            EtaStatus::Schur
        } else {
            EtaStatus::SingularConsistent
        },
        witness_value: quad(&c),
        witness: FormVector::from_coords(n, &c),
        zy_min_eigenvalue: zy_min,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{Operator, OperatorState};

    fn jet_at(op: &Operator, a: SymMatrix, x: Vec<f64>, u: f64) -> OperatorJet {
        let n = a.n();
        op.jet(&OperatorState::new(a, vec![0.0; n], u, x).unwrap()).unwrap()
    }

    fn random_x(n: usize, k: u64) -> SymMatrix {
        SymMatrix::from_fn(n, |a, b| ((k as f64 + 1.3) * (a as f64 + 0.7) * (b as f64 + 1.9)).sin())
    }

    #[test]
    fn coordinates_round_trip_and_preserve_norm() {
        let v = FormVector {
            x: random_x(3, 1),
            z: vec![1.0, -2.0, 0.5],
            y: 3.0,
        };
        let c = v.coords();
        assert_eq!(c.len(), form_coordinates(3));
        let back = FormVector::from_coords(3, &c);
        assert!(back.x.sub(&v.x).max_abs() < 1e-15);
        let cx: f64 = c[..6].iter().map(|t| t * t).sum();
        assert!((cx - v.x.frobenius_norm().powi(2)).abs() < 1e-13);
    }

    #[test]
    fn trace_laplace_at_identity() {
        let j = jet_at(&Operator::TraceLaplace { c: 0.0 }, SymMatrix::identity(3), vec![1.0; 3], 0.0);
        let x = random_x(3, 2);
        let f = keyco_form(&j, &x, &[1.0, 2.0, 3.0], 4.0).unwrap();
        assert!((f - 2.0 * x.frobenius_norm().powi(2)).abs() < 1e-12);
        let fs = form_spectrum(&j).unwrap();
        assert!(fs.min_eigenvalue.abs() < 1e-14);
        assert!((fs.eta.eta - 2.0).abs() < 1e-12);
        assert_eq!(fs.eta.status, EtaStatus::SingularConsistent);
    }

    #[test]
    fn logdet_at_identity() {
        let j = jet_at(&Operator::LogDet { c: 0.0 }, SymMatrix::identity(2), vec![1.0; 2], 0.0);
        let fs = form_spectrum(&j).unwrap();
        assert!(fs.min_eigenvalue.abs() < 1e-14);
        assert!((fs.x_block_min_eigenvalue - 1.0).abs() < 1e-12);
        assert!((fs.eta.eta - 1.0).abs() < 1e-12);
        // Null space is exactly the (Z, Y) block.
        let s = eigh(&fs.matrix).unwrap();
        let mx = 3;
        for k in 0..3 {
            let v = s.eigenvector(k);
            assert!(s.eigenvalues[k].abs() < 1e-14);
            assert!(v[..mx].iter().all(|t| t.abs() < 1e-12));
        }
        assert!((s.eigenvalues[3] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn null_arguments() {
        let j = jet_at(&Operator::Example33, SymMatrix::diag(&[0.5, 1.0]), vec![1.0, 1.0], 0.0);
        assert_eq!(keyco_form(&j, &SymMatrix::zeros(2), &[0.0, 0.0], 7.0).unwrap(), 0.0);
    }

    #[test]
    fn matrix_reproduces_form() {
        for name in crate::operator::CONVEX_CATALOG {
            let op = Operator::from_name(name, &[]).unwrap();
            let a = SymMatrix::from_rows(&[vec![1.2, 0.3, 0.0], vec![0.3, 0.8, -0.1], vec![0.0, -0.1, 1.5]]).unwrap();
            let j = jet_at(&op, a, vec![0.6, -0.4, 0.9], 0.2);
            let m = form_matrix(&j).unwrap();
            for k in 0..5 {
                let v = FormVector {
                    x: random_x(3, k),
                    z: vec![(k as f64).cos(), 0.3, -1.1],
                    y: 0.7 - k as f64,
                };
                let direct = keyco_form(&j, &v.x, &v.z, v.y).unwrap();
                let via = m.quad_form(&v.coords());
                assert!((direct - via).abs() <= 1e-10 * direct.abs().max(1.0), "{name}");
            }
            let fs = form_spectrum(&j).unwrap();
            let c = fs.minimizer.coords();
            let at_min = keyco_form(&j, &fs.minimizer.x, &fs.minimizer.z, fs.minimizer.y).unwrap();
            assert!((at_min - fs.min_eigenvalue).abs() <= 1e-9 * fs.matrix.max_abs().max(1.0));
            assert!((c.iter().map(|t| t * t).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn eta_vanishes_on_radial_solution_data() {
        // u = r at x = (2, 1): D²u = (I − x̂x̂ᵀ)/r, regularized to stay invertible.
        let x = vec![2.0, 1.0];
        let r = 5f64.sqrt();
        let a = SymMatrix::from_fn(2, |i, k| ((i == k) as u8 as f64 - x[i] * x[k] / 5.0) / r + 1e-3 * (i == k) as u8 as f64);
        let j = jet_at(&Operator::Example33, a.clone(), x, 0.0);
        let fs = form_spectrum(&j).unwrap();
        assert!(fs.min_eigenvalue >= -1e-8 * fs.matrix.max_abs());
        assert!(fs.eta.eta <= 1e-6);
        // Witness is proportional to A.
        let w = &fs.eta.witness.x;
        let cos = w.contract(&a) / (w.frobenius_norm() * a.frobenius_norm());
        assert!((cos.abs() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn indefinite_and_inconsistent_blocks() {
        let mut j = OperatorJet::zeros(2, 0.0);
        j.fab = SymMatrix::identity(2);
        j.ainv = Some(SymMatrix::identity(2));
        j.fuu = -1.0;
        let e = strict_eta(&j).unwrap();
        assert_eq!(e.status, EtaStatus::Indefinite);
        assert!(e.witness_value < 0.0 && e.eta == f64::NEG_INFINITY);

        j.fuu = 0.0;
        j.fab_u = SymMatrix::identity(2);
        let e = strict_eta(&j).unwrap();
        assert_eq!(e.status, EtaStatus::Inconsistent);
        assert!(e.witness_value < -0.5);
        assert!((e.witness.x.frobenius_norm() - 1.0).abs() < 1e-12);
    }
}
