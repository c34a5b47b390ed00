//! Hamiltonian Monte Carlo with identity mass and a leapfrog integrator.
//!
//! The potential is `U = -log p`. Each iteration draws a fresh momentum,
//! integrates `leapfrog_steps` steps and applies the Metropolis test
//! `min(1, exp(H_old - H_new))`. The step is jittered per iteration by a
//! state-independent uniform factor. During burn-in the step size follows a
//! multiplicative rule on the recent acceptance probabilities; it is frozen
//! afterwards.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bayes::{Differentiable, PosteriorSamples};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmcConfig {
    pub step_size: f64,
    pub leapfrog_steps: usize,
    pub burn_in: usize,
    /// Iterations after burn-in.
    pub total_samples: usize,
    /// Number of final states returned.
    pub keep_last: usize,
    pub adapt: bool,
    /// Each iteration scales the step by a uniform factor in
    /// `[1 - jitter, 1 + jitter]`; 0 disables.
    pub step_jitter: f64,
    /// When false every proposal is accepted (pure Hamiltonian dynamics).
    pub metropolis: bool,
    pub seed: u64,
}

impl Default for HmcConfig {
    fn default() -> Self {
        Self {
            step_size: 0.1,
            leapfrog_steps: 50,
            burn_in: 2000,
            total_samples: 15_000,
            keep_last: 10_000,
            adapt: true,
            step_jitter: 0.2,
            metropolis: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmcDiagnostics {
    /// Accepted fraction after burn-in.
    pub acceptance_rate: f64,
    pub burn_in_acceptance: f64,
    pub final_step_size: f64,
    pub divergences: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct HmcOutput {
    pub samples: PosteriorSamples,
    pub diagnostics: HmcDiagnostics,
}

/// `n_steps` leapfrog steps of `dtheta = r`, `dr = -grad U`.
///
/// `potential(theta, grad)` returns `U(theta)` and writes its gradient.
/// `grad_u` must hold `grad U(theta)` on entry and holds the gradient at the
/// final position on return. Returns `U` at the final position; a non-finite
/// gradient or potential is reported as a divergence.
pub fn leapfrog<F>(
    mut potential: F,
    theta: &mut [f64],
    r: &mut [f64],
    grad_u: &mut [f64],
    step: f64,
    n_steps: usize,
) -> Result<f64>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<f64>,
{
    let diverged = |steps: usize, last: f64| Error::Divergence {
        method: "leapfrog",
        steps,
        last: vec![last],
    };
    let mut u = f64::NAN;
    for i in 0..n_steps {
        for (ri, gi) in r.iter_mut().zip(grad_u.iter()) {
            *ri -= 0.5 * step * gi;
        }
        for (ti, ri) in theta.iter_mut().zip(r.iter()) {
            *ti += step * ri;
        }
        u = potential(theta, grad_u).map_err(|_| diverged(i + 1, f64::NAN))?;
        if !u.is_finite() || grad_u.iter().any(|g| !g.is_finite()) {
            return Err(diverged(i + 1, u));
        }
        for (ri, gi) in r.iter_mut().zip(grad_u.iter()) {
            *ri -= 0.5 * step * gi;
        }
    }
    if n_steps == 0 {
        u = potential(theta, grad_u)?;
    }
    Ok(u)
}

/// Multiplicative burn-in step-size rule.
///
/// The window holds the acceptance probabilities observed since the last
/// change (at most 100). Once it holds at least `MIN_WINDOW` entries, a mean
/// above 0.9 grows the step by 1.1 and a mean below 0.6 shrinks it by 1.1;
/// either change clears the window.
#[derive(Debug, Clone)]
pub struct StepSizeAdapter {
    pub step: f64,
    window: VecDeque<f64>,
}

const WINDOW: usize = 100;
const MIN_WINDOW: usize = 5;

impl StepSizeAdapter {
    pub fn new(step: f64) -> Self {
        Self {
            step,
            window: VecDeque::with_capacity(WINDOW),
        }
    }

    pub fn window_mean(&self) -> Option<f64> {
        (!self.window.is_empty()).then(|| self.window.iter().sum::<f64>() / self.window.len() as f64)
    }

    /// Records one acceptance probability and returns the new step size.
    pub fn adapt_step_size(&mut self, alpha: f64) -> f64 {
        if self.window.len() == WINDOW {
            self.window.pop_front();
        }
        self.window.push_back(alpha);
        if self.window.len() >= MIN_WINDOW {
            let mean = self.window_mean().unwrap_or(0.0);
            if mean > 0.9 {
                self.step *= 1.1;
                self.window.clear();
            } else if mean < 0.6 {
                self.step /= 1.1;
                self.window.clear();
            }
        }
        self.step
    }
}

/// Runs one chain from `init` and returns its last `keep_last` states.
pub fn hmc_sample<D: Differentiable + ?Sized>(target: &D, init: Vec<f64>, config: &HmcConfig) -> Result<HmcOutput> {
    let d = target.dim();
    if init.len() != d {
        return Err(Error::Dimension {
            context: "initial state",
            expected: d,
            actual: init.len(),
        });
    }
    if !(config.step_size > 0.0) || config.leapfrog_steps == 0 || config.total_samples == 0 || config.keep_last == 0 {
        return Err(Error::Config(
            "HMC needs a positive step size, leapfrog steps, sample count and kept draws".into(),
        ));
    }
    if !(0.0..1.0).contains(&config.step_jitter) {
        return Err(Error::Config(format!("step jitter {} must lie in [0, 1)", config.step_jitter)));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let potential = |theta: &[f64], g: &mut [f64]| -> Result<f64> {
        let lp = target.value_and_grad(theta, g)?;
        g.iter_mut().for_each(|v| *v = -*v);
        Ok(-lp)
    };

    let mut theta = init;
    let mut grad = vec![0.0; d];
    let mut u = potential(&theta, &mut grad)?;
    if !u.is_finite() {
        return Err(Error::NonFinite {
            context: "initial log-density",
            index: 0,
        });
    }

    let mut adapter = StepSizeAdapter::new(config.step_size);
    let keep = config.keep_last.min(config.total_samples);
    let n_iter = config.burn_in + config.total_samples;
    let mut draws = Vec::with_capacity(keep);
    let (mut accepted_burn, mut accepted_main, mut divergences) = (0usize, 0usize, 0usize);

    let mut prop = vec![0.0; d];
    let mut r = vec![0.0; d];
    let mut prop_grad = vec![0.0; d];
    for it in 0..n_iter {
        let burning = it < config.burn_in;
        for ri in r.iter_mut() {
            *ri = rng.sample(StandardNormal);
        }
        let h_old = u + 0.5 * r.iter().map(|v| v * v).sum::<f64>();
        prop.copy_from_slice(&theta);
        prop_grad.copy_from_slice(&grad);
        let step = if config.step_jitter > 0.0 {
            let v: f64 = rng.random();
            adapter.step * (1.0 + config.step_jitter * (2.0 * v - 1.0))
        } else {
            adapter.step
        };
        let outcome = leapfrog(potential, &mut prop, &mut r, &mut prop_grad, step, config.leapfrog_steps);
        let p: f64 = rng.random();
        let (alpha, u_new) = match outcome {
            Ok(u_new) => {
                let h_new = u_new + 0.5 * r.iter().map(|v| v * v).sum::<f64>();
                if h_new.is_finite() {
                    ((h_old - h_new).exp().min(1.0), u_new)
                } else {
                    divergences += 1;
                    (0.0, f64::NAN)
                }
            }
            Err(_) => {
                divergences += 1;
                (0.0, f64::NAN)
            }
        };
        let accept = if config.metropolis { p < alpha } else { u_new.is_finite() };
        if accept {
            std::mem::swap(&mut theta, &mut prop);
            std::mem::swap(&mut grad, &mut prop_grad);
            u = u_new;
            if burning {
                accepted_burn += 1;
            } else {
                accepted_main += 1;
            }
        }
        if burning && config.adapt {
            adapter.adapt_step_size(alpha);
        }
        if it + keep >= n_iter {
            draws.push(theta.clone());
        }
    }

    let burn_in_acceptance = if config.burn_in > 0 {
        accepted_burn as f64 / config.burn_in as f64
    } else {
        f64::NAN
    };
    let mut warnings = Vec::new();
    if config.burn_in > 0 && burn_in_acceptance < 0.05 {
        warnings.push(format!(
            "burn-in acceptance {burn_in_acceptance:.3} is below 0.05; step size may be mistuned"
        ));
    }
    let acceptance_rate = accepted_main as f64 / config.total_samples as f64;
    Ok(HmcOutput {
        samples: PosteriorSamples {
            draws,
            acceptance_rate: Some(acceptance_rate),
            seed: config.seed,
            sampler: "hmc".into(),
        },
        diagnostics: HmcDiagnostics {
            acceptance_rate,
            burn_in_acceptance: if burn_in_acceptance.is_nan() { 0.0 } else { burn_in_acceptance },
            final_step_size: adapter.step,
            divergences,
            warnings,
        },
    })
}
