//! Point-estimate training (plain PINN) and MC dropout.
//!
//! Both minimize the negative log-likelihood, i.e. the sigma-weighted squared
//! residual loss, with Adam. They share one training loop: a rate of zero
//! draws no masks, so dropout at rate 0 retraces the PINN trajectory exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::LogPosteriorTarget;
use crate::error::{Error, Result};
use crate::mlp::DropoutMask;
use crate::pde::Field;
use crate::samplers::adam::{AdamConfig, AdamState};
use crate::surrogate::Surrogate;

const MASK_STREAM: u64 = 1;
const PREDICT_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PinnConfig {
    pub train_steps: usize,
    pub adam: AdamConfig,
    /// Unknown-coefficient values are recorded over this many final steps.
    pub k_window: usize,
    pub trace_every: usize,
    pub seed: u64,
}

impl Default for PinnConfig {
    fn default() -> Self {
        Self {
            train_steps: 200_000,
            adam: AdamConfig::default(),
            k_window: 10_000,
            trace_every: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DropoutConfig {
    /// Probability of dropping each hidden unit, in `[0, 1)`.
    pub rate: f64,
    pub train_steps: usize,
    /// Stochastic forward passes at prediction time.
    pub passes: usize,
    pub adam: AdamConfig,
    pub k_window: usize,
    pub trace_every: usize,
    pub seed: u64,
}

impl Default for DropoutConfig {
    fn default() -> Self {
        Self {
            rate: 0.01,
            train_steps: 200_000,
            passes: 10_000,
            adam: AdamConfig::default(),
            k_window: 10_000,
            trace_every: 1000,
            seed: 0,
        }
    }
}

impl DropoutConfig {
    fn as_pinn(&self) -> PinnConfig {
        PinnConfig {
            train_steps: self.train_steps,
            adam: self.adam,
            k_window: self.k_window,
            trace_every: self.trace_every,
            seed: self.seed,
        }
    }
}

/// Result of [`pinn_train`] or [`dropout_train`].
#[derive(Debug, Clone)]
pub struct TrainedModel {
    /// Final parameters, unknown coefficients last.
    pub params: Vec<f64>,
    pub rate: f64,
    /// Unknown-coefficient vectors from the last `k_window` steps.
    pub k_samples: Vec<Vec<f64>>,
    /// Mean loss over blocks of `trace_every` steps.
    pub loss_trace: Vec<f64>,
    /// Seed for prediction-time masks.
    pub seed: u64,
}

impl TrainedModel {
    /// Final values of the unknown coefficients.
    pub fn k_hat(&self, n_unknowns: usize) -> &[f64] {
        &self.params[self.params.len() - n_unknowns..]
    }

    /// Mean and population std of each recorded coefficient.
    pub fn k_stats(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        crate::bayes::mean_std(&self.k_samples)
    }
}

/// Trains a point estimate of the surrogate (and unknown coefficients).
pub fn pinn_train(target: &LogPosteriorTarget, config: &PinnConfig) -> Result<TrainedModel> {
    train(target, 0.0, config)
}

/// Trains with a fresh inverted-dropout mask on the hidden units every step.
pub fn dropout_train(target: &LogPosteriorTarget, config: &DropoutConfig) -> Result<TrainedModel> {
    if !(0.0..1.0).contains(&config.rate) {
        return Err(Error::Config(format!("dropout rate must lie in [0, 1), got {}", config.rate)));
    }
    train(target, config.rate, &config.as_pinn())
}

/// Initial parameters: Glorot-normal network weights, zero biases, zero
/// surrogate coefficients for KL and zero unknowns.
fn init_params(target: &LogPosteriorTarget, rng: &mut ChaCha20Rng) -> Vec<f64> {
    let mut theta = match target.surrogate() {
        Surrogate::Mlp(arch) => arch.xavier_init(rng),
        Surrogate::Kl(_) => vec![0.0; target.n_surrogate()],
    };
    theta.resize(target.n_surrogate() + target.n_unknowns(), 0.0);
    theta
}

fn train(target: &LogPosteriorTarget, rate: f64, config: &PinnConfig) -> Result<TrainedModel> {
    let arch = match (target.surrogate(), rate > 0.0) {
        (Surrogate::Mlp(a), _) => Some(a),
        (Surrogate::Kl(_), false) => None,
        (Surrogate::Kl(_), true) => return Err(Error::Config("dropout requires a network surrogate".into())),
    };
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut theta = init_params(target, &mut rng);
    let mut mask_rng = ChaCha20Rng::seed_from_u64(config.seed);
    mask_rng.set_stream(MASK_STREAM);

    let n = theta.len();
    let n_unknowns = target.n_unknowns();
    let mut adam = AdamState::new(n, config.adam);
    let mut grad = vec![0.0; n];
    let mut trace = Vec::new();
    let (mut block_sum, mut block_n) = (0.0, 0usize);
    let record_from = config.train_steps.saturating_sub(config.k_window);
    let mut k_samples = Vec::new();

    for step in 0..config.train_steps {
        let mask = match arch {
            Some(a) if rate > 0.0 => Some(DropoutMask::sample(a, rate, &mut mask_rng)),
            _ => None,
        };
        grad.iter_mut().for_each(|g| *g = 0.0);
        let terms = target.log_likelihood_masked(&theta, mask.as_ref().map(|m| m.scales.as_slice()), Some(&mut grad));
        let loss = match terms {
            Ok(t) if t.total().is_finite() && grad.iter().all(|g| g.is_finite()) => -t.total(),
            _ => {
                trace.push(f64::NAN);
                return Err(Error::Divergence {
                    method: "point-estimate training",
                    steps: step + 1,
                    last: trace,
                });
            }
        };
        grad.iter_mut().for_each(|g| *g = -*g);
        adam.step(&mut theta, &grad);
        if n_unknowns > 0 && step >= record_from {
            k_samples.push(theta[n - n_unknowns..].to_vec());
        }
        block_sum += loss;
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
    Ok(TrainedModel {
        params: theta,
        rate,
        k_samples,
        loss_trace: trace,
        seed: config.seed,
    })
}

/// Pointwise mean and population std over `passes` masked forward passes at
/// the training rate.
pub fn dropout_predict(
    target: &LogPosteriorTarget,
    model: &TrainedModel,
    passes: usize,
    points: &[f64],
    field: Field,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if passes == 0 {
        return Err(Error::Argument("at least one prediction pass is required".into()));
    }
    let arch = match target.surrogate() {
        Surrogate::Mlp(a) => a,
        Surrogate::Kl(_) if model.rate == 0.0 => {
            let mean = target.predict(&model.params, points, field)?;
            let zeros = vec![0.0; mean.len()];
            return Ok((mean, zeros));
        }
        Surrogate::Kl(_) => return Err(Error::Config("dropout requires a network surrogate".into())),
    };
    let mut rng = ChaCha20Rng::seed_from_u64(model.seed);
    rng.set_stream(PREDICT_STREAM);
    let mut acc: Option<Moments> = None;
    const CHUNK: usize = 256;
    let mut done = 0;
    while done < passes {
        let take = CHUNK.min(passes - done);
        let masks: Vec<DropoutMask> = (0..take)
            .map(|_| DropoutMask::sample(arch, model.rate, &mut rng))
            .collect();
        let rows = masks
            .par_iter()
            .map(|m| target.predict_masked(&model.params, points, field, Some(&m.scales)))
            .collect::<Result<Vec<_>>>()?;
        let acc = acc.get_or_insert_with(|| Moments::new(rows[0].len()));
        rows.iter().for_each(|r| acc.push(r));
        done += take;
    }
    Ok(acc.expect("passes > 0").finish())
}

/// Welford accumulator over rows.
struct Moments {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(len: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }

    fn push(&mut self, row: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &x) in self.mean.iter_mut().zip(&mut self.m2).zip(row) {
            let d = x - *m;
            *m += d / n;
            *s += d * (x - *m);
        }
    }

    fn finish(self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n as f64;
        let std = self.m2.iter().map(|s| (s / n).max(0.0).sqrt()).collect();
        (self.mean, std)
    }
}
