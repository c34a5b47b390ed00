//! Gaussian-process regression on an arbitrary (typically Monte-Carlo
//! estimated) covariance.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Jitter ladder added to the training covariance diagonal, relative to its
/// mean diagonal entry. The plain matrix is tried first.
const JITTERS: [f64; 6] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Posterior mean and standard deviation at `test` points.
///
/// `kernel(i, j)` is the prior covariance between points `i` and `j` of some
/// index set; `train` and `test` select from it. Returns a factorization error
/// if the covariance stays indefinite at the largest jitter.
pub fn gp_regress<K>(kernel: K, train: &[usize], obs: &[f64], noise_std: &[f64], test: &[usize]) -> Result<(Vec<f64>, Vec<f64>)>
where
    K: Fn(usize, usize) -> f64,
{
    let n = train.len();
    if obs.len() != n || noise_std.len() != n {
        return Err(Error::Dimension {
            context: "GP observations",
            expected: n,
            actual: obs.len().min(noise_std.len()),
        });
    }
    if let Some(s) = noise_std.iter().find(|s| !(**s > 0.0)) {
        return Err(Error::Argument(format!("noise std must be positive, got {s}")));
    }
    let k_tt = DMatrix::from_fn(n, n, |a, b| kernel(train[a], train[b]));
    let scale = (0..n).map(|i| k_tt[(i, i)]).sum::<f64>() / n.max(1) as f64;
    let mut chol = None;
    let mut last = 0.0;
    for j in JITTERS {
        last = j * scale.max(f64::MIN_POSITIVE);
        let mut a = k_tt.clone();
        for i in 0..n {
            a[(i, i)] += noise_std[i] * noise_std[i] + last;
        }
        if let Some(c) = a.cholesky() {
            chol = Some(c);
            break;
        }
    }
    let chol = chol.ok_or(Error::Factorization { jitter: last })?;
    let alpha = chol.solve(&DVector::from_column_slice(obs));
    let l = chol.l();

    let mut mean = Vec::with_capacity(test.len());
    let mut std = Vec::with_capacity(test.len());
    for &t in test {
        let k_star = DVector::from_fn(n, |a, _| kernel(train[a], t));
        mean.push(k_star.dot(&alpha));
        let v = l
            .solve_lower_triangular(&k_star)
            .expect("Cholesky factor has a positive diagonal");
        let prior = kernel(t, t);
        let var = (prior - v.norm_squared()).clamp(0.0, prior.max(0.0));
        std.push(var.sqrt());
    }
    Ok((mean, std))
}
