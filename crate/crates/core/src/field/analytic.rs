use serde::Serialize;

use super::Jet4;
use crate::error::{Error, Result};
use crate::tensor::{SymMatrix, Tensor3, Tensor4};

/// `u(x) = s·|x|`. Smooth away from the origin; convex with one null
/// direction `x̂` at every point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialField {
    pub n: usize,
    pub scale: f64,
}

impl RadialField {
    pub fn new(n: usize, scale: f64) -> Result<Self> {
        if n == 0 || !scale.is_finite() {
            return Err(Error::input("radial field needs n ≥ 1 and finite scale"));
        }
        Ok(RadialField { n, scale })
    }

    fn radius(&self, x: &[f64]) -> Result<f64> {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r <= 1e-12 {
            return Err(Error::domain("radial field is not smooth at the origin"));
        }
        Ok(r)
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.scale * self.radius(x)?)
    }

    pub fn hessian(&self, x: &[f64]) -> Result<SymMatrix> {
        let r = self.radius(x)?;
        let s = self.scale;
        Ok(SymMatrix::from_fn(self.n, |a, b| {
            s * (delta(a, b) - x[a] * x[b] / (r * r)) / r
        }))
    }

    pub fn jet4(&self, x: &[f64]) -> Result<Jet4> {
        let n = self.n;
        let r = self.radius(x)?;
        let s = self.scale;
        let r2 = r * r;
        let r3 = r2 * r;
        let r5 = r3 * r2;
        let r7 = r5 * r2;
        let du = x.iter().map(|v| s * v / r).collect();
        let d2u = self.hessian(x)?;
        let mut d3u = Tensor3::zeros(n);
        let mut d4u = Tensor4::zeros(n);
        for a in 0..n {
            for b in a..n {
                for c in b..n {
                    let v = 3.0 * x[a] * x[b] * x[c] / r5
                        - (delta(a, b) * x[c] + delta(a, c) * x[b] + delta(b, c) * x[a]) / r3;
                    d3u.set_sym(a, b, c, s * v);
                    for d in c..n {
                        let pairs = delta(a, d) * x[b] * x[c]
                            + delta(b, d) * x[a] * x[c]
                            + delta(c, d) * x[a] * x[b]
                            + delta(a, b) * x[c] * x[d]
                            + delta(a, c) * x[b] * x[d]
                            + delta(b, c) * x[a] * x[d];
                        let dd = delta(a, b) * delta(c, d) + delta(a, c) * delta(b, d) + delta(a, d) * delta(b, c);
                        let v = 3.0 * pairs / r5 - 15.0 * x[a] * x[b] * x[c] * x[d] / r7 - dd / r3;
                        d4u.set_sym(a, b, c, d, s * v);
                    }
                }
            }
        }
        Ok(Jet4 {
            x: x.to_vec(),
            u: s * r,
            du,
            d2u,
            d3u,
            d4u,
        })
    }
}

#[inline]
fn delta(a: usize, b: usize) -> f64 {
    if a == b {
        1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn on_axis_jet() {
        let f = RadialField::new(3, 1.0).unwrap();
        let j = f.jet4(&[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(j.u, 1.0);
        assert_eq!(j.du, vec![1.0, 0.0, 0.0]);
        assert_eq!(j.d2u, SymMatrix::diag(&[0.0, 1.0, 1.0]));
    }

    #[test]
    fn higher_derivatives_match_differences_of_lower_ones() {
        let f = RadialField::new(2, 1.3).unwrap();
        let x = [1.7, -0.6];
        let j = f.jet4(&x).unwrap();
        let h = 1e-5;
        for c in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[c] += h;
            xm[c] -= h;
            let (jp, jm) = (f.jet4(&xp).unwrap(), f.jet4(&xm).unwrap());
            for a in 0..2 {
                for b in 0..2 {
                    let fd3 = (jp.d2u.get(a, b) - jm.d2u.get(a, b)) / (2.0 * h);
                    assert!((fd3 - j.d3u.get(a, b, c)).abs() < 1e-8);
                    for d in 0..2 {
                        let fd4 = (jp.d3u.get(a, b, d) - jm.d3u.get(a, b, d)) / (2.0 * h);
                        assert!((fd4 - j.d4u.get(a, b, d, c)).abs() < 1e-7);
                    }
                }
            }
        }
        assert!(j.d4u.max_asymmetry() < 1e-15);
    }

    #[test]
    fn origin_is_rejected() {
        let f = RadialField::new(2, 1.0).unwrap();
        assert!(matches!(f.jet4(&[0.0, 0.0]), Err(Error::Domain(_))));
    }
}
