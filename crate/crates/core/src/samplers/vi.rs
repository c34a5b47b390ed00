//! Mean-field Gaussian variational inference with the reparameterization
//! `theta = mu + softplus(rho) * z`.
//!
//! The per-step objective is the Monte-Carlo estimate
//! `mean_j [log Q(theta_j) - log p(theta_j)]` over `batch` draws. The default
//! gradient estimator differentiates only through the sample path
//! (`theta_j` as a function of `mu`, `rho`), dropping the score term of
//! `log Q` whose expectation is zero; the total derivative is available too.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use crate::bayes::{Differentiable, PosteriorSamples};
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const PATIENCE: usize = 100;

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViParams {
    pub mu: Vec<f64>,
    pub rho: Vec<f64>,
}

impl ViParams {
    pub fn new(mu: Vec<f64>, rho: Vec<f64>) -> Result<Self> {
        if mu.len() != rho.len() {
            return Err(Error::Dimension {
                context: "variational rho",
                expected: mu.len(),
                actual: rho.len(),
            });
        }
        Ok(Self { mu, rho })
    }

    pub fn std(&self) -> Vec<f64> {
        self.rho.iter().map(|&r| softplus(r)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViGradient {
    /// Sample-path derivative only.
    Path,
    /// Full derivative of the per-sample objective.
    Total,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViConfig {
    pub steps: usize,
    pub batch: usize,
    pub adam: AdamConfig,
    pub gradient: ViGradient,
    /// Objective averaged over blocks of this many steps for the trace.
    pub trace_every: usize,
    pub seed: u64,
}

impl Default for ViConfig {
    fn default() -> Self {
        Self {
            steps: 200_000,
            batch: 5,
            adam: AdamConfig::default(),
            gradient: ViGradient::Path,
            trace_every: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ViFit {
    pub params: ViParams,
    pub objective_trace: Vec<f64>,
    pub skipped_steps: usize,
}

/// Optimizes the variational parameters against the log-density `target`.
pub fn vi_fit<D: Differentiable + ?Sized>(target: &D, init: ViParams, config: &ViConfig) -> Result<ViFit> {
    let d = target.dim();
    if init.mu.len() != d || init.rho.len() != d {
        return Err(Error::Dimension {
            context: "variational parameters",
            expected: d,
            actual: init.mu.len(),
        });
    }
    if config.batch == 0 {
        return Err(Error::Config("VI batch size must be positive".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    // mu and rho are optimized as one vector.
    let mut zeta: Vec<f64> = init.mu.iter().chain(&init.rho).copied().collect();
    let mut adam = AdamState::new(2 * d, config.adam);
    let mut grad_zeta = vec![0.0; 2 * d];
    let mut z = vec![0.0; d];
    let mut theta = vec![0.0; d];
    let mut g = vec![0.0; d];
    let mut trace = Vec::new();
    let (mut block_sum, mut block_n) = (0.0, 0usize);
    let (mut bad_run, mut skipped) = (0usize, 0usize);
    let inv_b = 1.0 / config.batch as f64;

    for step in 0..config.steps {
        grad_zeta.iter_mut().for_each(|v| *v = 0.0);
        let (mu, rho) = zeta.split_at(d);
        let s: Vec<f64> = rho.iter().map(|&r| softplus(r)).collect();
        let sig: Vec<f64> = rho.iter().map(|&r| sigmoid(r)).collect();
        let log_s: f64 = s.iter().map(|v| v.ln()).sum();
        let mut objective = 0.0;
        let mut finite = true;
        for _ in 0..config.batch {
            for i in 0..d {
                z[i] = rng.sample(StandardNormal);
                theta[i] = mu[i] + s[i] * z[i];
            }
            let lp = match target.value_and_grad(&theta, &mut g) {
                Ok(v) if v.is_finite() && g.iter().all(|x| x.is_finite()) => v,
                _ => {
                    finite = false;
                    break;
                }
            };
            let zz: f64 = z.iter().map(|v| v * v).sum();
            let log_q = -log_s - 0.5 * zz - 0.5 * d as f64 * LN_2PI;
            objective += inv_b * (log_q - lp);
            let (gm, gr) = grad_zeta.split_at_mut(d);
            match config.gradient {
                ViGradient::Path => {
                    // d/dtheta [log q(theta) - log p(theta)] = -z/s - grad log p
                    for i in 0..d {
                        let e = -z[i] / s[i] - g[i];
                        gm[i] += inv_b * e;
                        gr[i] += inv_b * e * z[i] * sig[i];
                    }
                }
                ViGradient::Total => {
                    for i in 0..d {
                        gm[i] -= inv_b * g[i];
                        gr[i] -= inv_b * (g[i] * z[i] * sig[i] + sig[i] / s[i]);
                    }
                }
            }
        }
        if !finite || !objective.is_finite() {
            bad_run += 1;
            skipped += 1;
            if bad_run >= PATIENCE {
                return Err(Error::Divergence {
                    method: "variational inference",
                    steps: step + 1,
                    last: trace,
                });
            }
            continue;
        }
        bad_run = 0;
        adam.step(&mut zeta, &grad_zeta);
        block_sum += objective;
        block_n += 1;
        if block_n == config.trace_every.max(1) {
            trace.push(block_sum / block_n as f64);
            block_sum = 0.0;
            block_n = 0;
        }
    }
    if block_n > 0 {
        trace.push(block_sum / block_n as f64);
    }
    let rho = zeta.split_off(d);
    Ok(ViFit {
        params: ViParams { mu: zeta, rho },
        objective_trace: trace,
        skipped_steps: skipped,
    })
}

/// `count` reparameterized draws.
pub fn vi_sample(params: &ViParams, count: usize, seed: u64) -> PosteriorSamples {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let s = params.std();
    let draws = (0..count)
        .map(|_| {
            params
                .mu
                .iter()
                .zip(&s)
                .map(|(m, sd)| m + sd * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    PosteriorSamples {
        draws,
        acceptance_rate: None,
        seed,
        sampler: "vi".into(),
    }
}
