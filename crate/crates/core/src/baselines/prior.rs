//! Monte-Carlo study of the function-space prior induced by Gaussian network
//! weights: output covariance kernels and the marginal laws of the output and
//! its derivatives.

use ndarray::linalg::general_mat_mul;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp::{DerivOrder, MlpArchitecture, MlpTape, PriorScales};

const MAX_BATCHES: usize = 100;

/// Sample covariance of `ũ` over a grid, with batch-means standard errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorKernelEstimate {
    /// Grid points, point-major.
    pub grid: Vec<f64>,
    pub n_points: usize,
    pub n_samples: usize,
    /// Row-major `n_points x n_points`.
    pub cov: Vec<f64>,
    /// Monte-Carlo standard error of each entry of `cov`.
    pub std_err: Vec<f64>,
}

impl PriorKernelEstimate {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.cov[i * self.n_points + j]
    }

    pub fn se(&self, i: usize, j: usize) -> f64 {
        self.std_err[i * self.n_points + j]
    }

    pub fn mean_std_err(&self) -> f64 {
        self.std_err.iter().sum::<f64>() / self.std_err.len() as f64
    }

    /// Smallest eigenvalue after adding `jitter` to the diagonal.
    pub fn min_eigenvalue(&self, jitter: f64) -> f64 {
        let n = self.n_points;
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| self.get(i, j) + if i == j { jitter } else { 0.0 });
        m.symmetric_eigenvalues().min()
    }

    /// Row-major CSV with one row per grid point.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for i in 0..self.n_points {
            let row: Vec<String> = (0..self.n_points).map(|j| format!("{:?}", self.get(i, j))).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }
}

/// Per-batch raw sums of network outputs over a grid.
struct BatchSums {
    n: usize,
    sum: Vec<f64>,
    outer: Array2<f64>,
}

/// Runs `batch` prior draws on the grid and returns output rows.
fn draw_outputs(
    arch: &MlpArchitecture,
    scales: &PriorScales,
    grid: &[f64],
    count: usize,
    rng: &mut ChaCha20Rng,
) -> Result<Array2<f64>> {
    let g = grid.len() / arch.input_dim();
    let mut rows = Array2::zeros((count, g));
    for s in 0..count {
        let theta = arch.sample_params(scales, rng);
        let tape = MlpTape::record(arch, &theta, grid, arch.input_dim(), DerivOrder::Value, None)?;
        rows.row_mut(s)
            .iter_mut()
            .zip(&tape.output().value)
            .for_each(|(r, v)| *r = *v);
    }
    Ok(rows)
}

fn batch_sizes(n: usize, batches: usize) -> Vec<usize> {
    (0..batches).map(|b| n / batches + usize::from(b < n % batches)).collect()
}

/// Covariance of the prior network output over `grid` from `n_samples`
/// independent parameter draws.
///
/// Draws are split into up to 100 batches, each with its own random stream,
/// so the result does not depend on the thread count. Standard errors are the
/// spread of the per-batch covariances divided by the square root of the
/// batch count.
pub fn estimate_prior_kernel(
    arch: &MlpArchitecture,
    scales: &PriorScales,
    grid: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<PriorKernelEstimate> {
    if n_samples < 2 {
        return Err(Error::Argument("at least two prior samples are required".into()));
    }
    if grid.is_empty() || grid.len() % arch.input_dim() != 0 {
        return Err(Error::Dimension {
            context: "kernel grid",
            expected: arch.input_dim(),
            actual: grid.len() % arch.input_dim(),
        });
    }
    let g = grid.len() / arch.input_dim();
    let batches = (n_samples / 2).clamp(1, MAX_BATCHES);
    let sums = batch_sizes(n_samples, batches)
        .into_par_iter()
        .enumerate()
        .map(|(b, count)| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let rows = draw_outputs(arch, scales, grid, count, &mut rng)?;
            let mut outer = Array2::zeros((g, g));
            general_mat_mul(1.0, &rows.t(), &rows, 0.0, &mut outer);
            let sum = rows.sum_axis(ndarray::Axis(0)).to_vec();
            Ok(BatchSums { n: count, sum, outer })
        })
        .collect::<Result<Vec<_>>>()?;

    let cov_of = |n: usize, sum: &[f64], outer: &Array2<f64>| -> Vec<f64> {
        let nf = n as f64;
        let mut c = vec![0.0; g * g];
        for i in 0..g {
            for j in 0..g {
                c[i * g + j] = (outer[(i, j)] - sum[i] * sum[j] / nf) / (nf - 1.0);
            }
        }
        c
    };
    let mut total_sum = vec![0.0; g];
    let mut total_outer = Array2::zeros((g, g));
    for b in &sums {
        total_sum.iter_mut().zip(&b.sum).for_each(|(t, s)| *t += s);
        total_outer += &b.outer;
    }
    let cov = cov_of(n_samples, &total_sum, &total_outer);

    let std_err = if batches >= 2 && sums.iter().all(|b| b.n >= 2) {
        let per: Vec<Vec<f64>> = sums.iter().map(|b| cov_of(b.n, &b.sum, &b.outer)).collect();
        let nb = batches as f64;
        (0..g * g)
            .map(|e| {
                let m = per.iter().map(|c| c[e]).sum::<f64>() / nb;
                let v = per.iter().map(|c| (c[e] - m).powi(2)).sum::<f64>() / (nb - 1.0);
                (v / nb).sqrt()
            })
            .collect()
    } else {
        vec![f64::INFINITY; g * g]
    };

    Ok(PriorKernelEstimate {
        grid: grid.to_vec(),
        n_points: g,
        n_samples,
        cov,
        std_err,
    })
}

/// Prior draws of `ũ`, `dũ/dx` and `d²ũ/dx²` at the given 1D points.
#[derive(Debug, Clone)]
pub struct DerivativeSamples {
    pub points: Vec<f64>,
    /// `value[p][s]`: sample `s` at point `p`.
    pub value: Vec<Vec<f64>>,
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
}

/// Draws `n_samples` prior networks (scalar input) and records the output and
/// its first two derivatives at `points`.
pub fn sample_prior_derivatives(
    arch: &MlpArchitecture,
    scales: &PriorScales,
    points: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<DerivativeSamples> {
    if arch.input_dim() != 1 {
        return Err(Error::Config("derivative study needs a scalar-input network".into()));
    }
    let batches = n_samples.clamp(1, MAX_BATCHES);
    let chunks = batch_sizes(n_samples, batches)
        .into_par_iter()
        .enumerate()
        .map(|(b, count)| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                let theta = arch.sample_params(scales, &mut rng);
                let tape = MlpTape::record(arch, &theta, points, 1, DerivOrder::Second, None)?;
                out.push(tape.into_output());
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let np = points.len();
    let mut res = DerivativeSamples {
        points: points.to_vec(),
        value: vec![Vec::with_capacity(n_samples); np],
        first: vec![Vec::with_capacity(n_samples); np],
        second: vec![Vec::with_capacity(n_samples); np],
    };
    for jets in chunks.iter().flatten() {
        for p in 0..np {
            res.value[p].push(jets.value[p]);
            res.first[p].push(jets.grad(p)[0]);
            res.second[p].push(jets.hess_diag(p)[0]);
        }
    }
    Ok(res)
}

/// Sample excess kurtosis `m4 / m2^2 - 3` (biased moments).
pub fn excess_kurtosis(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let (m2, m4) = xs.iter().fold((0.0, 0.0), |(a, b), &x| {
        let d = (x - mean) * (x - mean);
        (a + d, b + d * d)
    });
    let (m2, m4) = (m2 / n, m4 / n);
    m4 / (m2 * m2) - 3.0
}

/// Large-sample standard error of the excess kurtosis of Gaussian data.
pub fn gaussian_kurtosis_se(n: usize) -> f64 {
    (24.0 / n as f64).sqrt()
}

/// Architecture and per-layer prior scales for one kernel-study case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorCase {
    pub label: String,
    pub hidden_widths: Vec<usize>,
    pub scales: PriorScales,
}

impl PriorCase {
    /// Width `n` in both hidden layers, input-weight std 1, hidden and output
    /// weight std `sigma_w`, biases std 1.
    pub fn two_layer(label: &str, n: usize, sigma_w: f64) -> Self {
        Self {
            label: label.into(),
            hidden_widths: vec![n, n],
            scales: PriorScales {
                weight_std: vec![1.0, sigma_w, sigma_w],
                bias_std: vec![1.0; 3],
            },
        }
    }

    /// The five reference cases: (a)-(c) keep `sqrt(N) * sigma_w` fixed,
    /// (d)-(e) vary the width at unit weight std.
    pub fn reference_cases() -> Vec<Self> {
        vec![
            Self::two_layer("a", 20, 2.5f64.sqrt()),
            Self::two_layer("b", 50, 1.0),
            Self::two_layer("c", 100, 0.5f64.sqrt()),
            Self::two_layer("d", 20, 1.0),
            Self::two_layer("e", 100, 1.0),
        ]
    }

    pub fn arch(&self) -> Result<MlpArchitecture> {
        MlpArchitecture::new(1, self.hidden_widths.clone())
    }
}
