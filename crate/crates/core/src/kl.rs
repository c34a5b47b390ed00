//! Truncated Karhunen-Loève expansion of the zero-mean Gaussian process with
//! exponential kernel `k(x, x') = exp(-|x - x'| / l)` on `[-a, a]`.
//!
//! With `c = 1/l`, the eigenfunctions come in two families:
//!
//! * even: `cos(w x)` with `c - w tan(w a) = 0`
//! * odd:  `sin(w x)` with `w + c tan(w a) = 0`
//!
//! and share the eigenvalue `2c / (w^2 + c^2)`. The k-th smallest frequency
//! lies strictly inside `(k pi / 2a, (k+1) pi / 2a)`, even for even k and odd
//! for odd k, so sorting by frequency sorts eigenvalues in descending order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp::{DerivOrder, Jet, JetBatch};

const ROOT_TOL: f64 = 1e-12;
const DOMAIN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parity {
    /// `cos(w x)`
    Even,
    /// `sin(w x)`
    Odd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlMode {
    pub frequency: f64,
    pub parity: Parity,
    pub eigenvalue: f64,
    /// `1 / ||cos|| ` or `1 / ||sin||` over `[-a, a]`.
    pub norm: f64,
}

impl KlMode {
    /// `(psi, psi', psi'')` at `x`.
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        let w = self.frequency;
        let (s, c) = (w * x).sin_cos();
        match self.parity {
            Parity::Even => (self.norm * c, -self.norm * w * s, -self.norm * w * w * c),
            Parity::Odd => (self.norm * s, self.norm * w * c, -self.norm * w * w * s),
        }
    }
}

/// Leading eigenpairs of the exponential-kernel covariance operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlBasis {
    pub corr_length: f64,
    pub half_width: f64,
    pub modes: Vec<KlMode>,
}

/// Solves for the leading `n_terms` eigenpairs by bisection on each bracket.
pub fn kl_eigenpairs(corr_length: f64, half_width: f64, n_terms: usize) -> Result<KlBasis> {
    if !(corr_length > 0.0) || !(half_width > 0.0) || n_terms == 0 {
        return Err(Error::Argument(format!(
            "need corr_length > 0, half_width > 0, n_terms >= 1 (got {corr_length}, {half_width}, {n_terms})"
        )));
    }
    let c = 1.0 / corr_length;
    let a = half_width;
    let step = std::f64::consts::PI / (2.0 * a);
    let modes = (0..n_terms)
        .map(|k| {
            let parity = if k % 2 == 0 { Parity::Even } else { Parity::Odd };
            let f = |w: f64| match parity {
                Parity::Even => c * (w * a).cos() - w * (w * a).sin(),
                Parity::Odd => w * (w * a).cos() + c * (w * a).sin(),
            };
            let w = bisect(f, k as f64 * step, (k + 1) as f64 * step).ok_or(Error::Convergence { mode: k })?;
            let sin_term = (2.0 * w * a).sin() / (2.0 * w);
            let norm_sq = match parity {
                Parity::Even => a + sin_term,
                Parity::Odd => a - sin_term,
            };
            Ok(KlMode {
                frequency: w,
                parity,
                eigenvalue: 2.0 * c / (w * w + c * c),
                norm: 1.0 / norm_sq.sqrt(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(KlBasis {
        corr_length,
        half_width,
        modes,
    })
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> Option<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if !(flo.is_finite() && fhi.is_finite()) || flo.signum() == fhi.signum() {
        return None;
    }
    while hi - lo > ROOT_TOL {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return Some(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

impl KlBasis {
    pub fn n_terms(&self) -> usize {
        self.modes.len()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.eigenvalue).collect()
    }

    /// Fraction of the kernel's total variance `2a` retained by the truncation.
    pub fn energy_fraction(&self) -> f64 {
        self.modes.iter().map(|m| m.eigenvalue).sum::<f64>() / (2.0 * self.half_width)
    }

    pub fn kernel(&self, x: f64, y: f64) -> f64 {
        (-(x - y).abs() / self.corr_length).exp()
    }

    /// The kernel reconstructed from the retained modes.
    pub fn truncated_kernel(&self, x: f64, y: f64) -> f64 {
        self.modes
            .iter()
            .map(|m| m.eigenvalue * m.eval(x).0 * m.eval(y).0)
            .sum()
    }

    fn check_point(&self, x: f64) -> Result<()> {
        if !x.is_finite() || x.abs() > self.half_width + DOMAIN_TOL {
            return Err(Error::Domain {
                context: "KL basis",
                point: vec![x],
            });
        }
        Ok(())
    }

    /// Scaled basis `sqrt(alpha_i) psi_i` and its first two derivatives.
    pub fn scaled_basis(&self, x: f64) -> Result<Vec<(f64, f64, f64)>> {
        self.check_point(x)?;
        Ok(self
            .modes
            .iter()
            .map(|m| {
                let s = m.eigenvalue.sqrt();
                let (v, d, dd) = m.eval(x);
                (s * v, s * d, s * dd)
            })
            .collect())
    }

    /// `ũ(x) = sum_i sqrt(alpha_i) psi_i(x) theta_i` with exact derivatives.
    pub fn kl_eval(&self, theta: &[f64], x: f64) -> Result<Jet> {
        if theta.len() < self.n_terms() {
            return Err(Error::Dimension {
                context: "KL coefficients",
                expected: self.n_terms(),
                actual: theta.len(),
            });
        }
        let basis = self.scaled_basis(x)?;
        let mut jet = Jet::zeros(1);
        for (&t, (v, d, dd)) in theta.iter().zip(&basis) {
            jet.value += t * v;
            jet.grad[0] += t * d;
            jet.hess_diag[0] += t * dd;
        }
        Ok(jet)
    }

    /// Basis values at a batch of points, reused by evaluation and its adjoint.
    pub fn tabulate(&self, points: &[f64]) -> Result<KlTable> {
        let rows = points
            .iter()
            .map(|&x| self.scaled_basis(x))
            .collect::<Result<Vec<_>>>()?;
        Ok(KlTable {
            n_terms: self.n_terms(),
            rows,
        })
    }
}

/// Tabulated scaled basis at a fixed set of points.
#[derive(Debug, Clone)]
pub struct KlTable {
    n_terms: usize,
    rows: Vec<Vec<(f64, f64, f64)>>,
}

impl KlTable {
    pub fn eval(&self, theta: &[f64], order: DerivOrder) -> JetBatch {
        let mut out = JetBatch::zeros(self.rows.len(), 1, order);
        for (p, row) in self.rows.iter().enumerate() {
            let (mut v, mut d, mut dd) = (0.0, 0.0, 0.0);
            for (&t, &(b, bd, bdd)) in theta[..self.n_terms].iter().zip(row) {
                v += t * b;
                d += t * bd;
                dd += t * bdd;
            }
            out.value[p] = v;
            if order != DerivOrder::Value {
                out.grad[p] = d;
            }
            if order == DerivOrder::Second {
                out.hess_diag[p] = dd;
            }
        }
        out
    }

    /// Accumulates the coefficient gradient for the given output adjoint.
    pub fn backward(&self, adjoint: &JetBatch, grad: &mut [f64]) {
        for (p, row) in self.rows.iter().enumerate() {
            let av = adjoint.value[p];
            let ad = if adjoint.grad.is_empty() { 0.0 } else { adjoint.grad[p] };
            let add = if adjoint.hess_diag.is_empty() {
                0.0
            } else {
                adjoint.hess_diag[p]
            };
            for (g, &(b, bd, bdd)) in grad[..self.n_terms].iter_mut().zip(row) {
                *g += av * b + ad * bd + add * bdd;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_basis() -> KlBasis {
        kl_eigenpairs(0.25, 1.0, 20).unwrap()
    }

    #[test]
    fn eigenvalues_positive_and_non_increasing() {
        for (l, a, n) in [(0.25, 1.0, 20), (1.0, 2.0, 7), (0.05, 0.5, 40)] {
            let ev = kl_eigenpairs(l, a, n).unwrap().eigenvalues();
            assert!(ev.iter().all(|&v| v > 0.0));
            assert!(ev.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn twenty_terms_keep_about_92_percent_of_energy() {
        let frac = default_basis().energy_fraction();
        assert!((frac - 0.92).abs() < 0.01, "{frac}");
    }

    #[test]
    fn frequencies_satisfy_transcendental_equations() {
        let b = default_basis();
        let c = 4.0;
        for m in &b.modes {
            let w = m.frequency;
            let r = match m.parity {
                Parity::Even => c * w.cos() - w * w.sin(),
                Parity::Odd => w * w.cos() + c * w.sin(),
            };
            assert!(r.abs() < 1e-9, "{r}");
        }
    }

    #[test]
    fn invalid_arguments() {
        assert!(kl_eigenpairs(0.0, 1.0, 3).is_err());
        assert!(kl_eigenpairs(0.3, -1.0, 3).is_err());
        assert!(kl_eigenpairs(0.3, 1.0, 0).is_err());
    }

    #[test]
    fn zero_coefficients_give_zero_jet() {
        let jet = default_basis().kl_eval(&[0.0; 20], 0.3).unwrap();
        assert_eq!(jet, Jet::zeros(1));
    }

    #[test]
    fn outside_domain_is_rejected() {
        let b = default_basis();
        assert!(matches!(b.kl_eval(&[1.0; 20], 1.2), Err(Error::Domain { .. })));
        assert!(b.kl_eval(&[1.0; 20], -1.0).is_ok());
    }

    #[test]
    fn unit_vector_selects_first_mode_and_matches_finite_differences() {
        let b = default_basis();
        let mut theta = vec![0.0; 20];
        theta[0] = 1.0;
        let h = 1e-4;
        for &x in &[-0.6, -0.1, 0.35, 0.69] {
            let jet = b.kl_eval(&theta, x).unwrap();
            let m = &b.modes[0];
            assert!((jet.value - m.eigenvalue.sqrt() * m.eval(x).0).abs() < 1e-15);
            let up = b.kl_eval(&theta, x + h).unwrap().value;
            let dn = b.kl_eval(&theta, x - h).unwrap().value;
            let fd1 = (up - dn) / (2.0 * h);
            let fd2 = (up - 2.0 * jet.value + dn) / (h * h);
            assert!(((fd1 - jet.grad[0]) / jet.grad[0]).abs() < 1e-6);
            assert!(((fd2 - jet.hess_diag[0]) / jet.hess_diag[0]).abs() < 1e-6);
        }
    }
}
