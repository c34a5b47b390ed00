//! Potential normalizing flow: the time-`T` map of `du/dt = grad_u phi(u, t)`
//! under forward Euler, with the paired log-density recursion
//! `log p_i = log p_{i-1} - dt * Laplacian_u phi`.
//!
//! `phi` is a tanh network taking `(u, t)`; its input gradient and Laplacian
//! come from the jet forward pass, and training backpropagates through every
//! Euler step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use crate::bayes::{Differentiable, PosteriorSamples};
use crate::error::{Error, Result};
use crate::mlp::{DerivOrder, JetBatch, MlpArchitecture, MlpTape};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const PATIENCE: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub time_span: f64,
    pub euler_steps: usize,
    pub hidden_widths: Vec<usize>,
    pub train_steps: usize,
    pub batch: usize,
    pub adam: AdamConfig,
    pub trace_every: usize,
    pub seed: u64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            time_span: 1.0,
            euler_steps: 50,
            hidden_widths: vec![128; 3],
            train_steps: 100_000,
            batch: 16,
            adam: AdamConfig {
                lr: 1e-4,
                ..AdamConfig::default()
            },
            trace_every: 1000,
            seed: 0,
        }
    }
}

/// A scalar potential with known input gradient and Laplacian.
pub trait Potential {
    fn dim(&self) -> usize;

    /// `(grad_u phi, Laplacian_u phi)` at `(u, t)`.
    fn grad_laplacian(&self, u: &[f64], t: f64) -> Result<(Vec<f64>, f64)>;
}

/// Network potential over `(u, t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialNet {
    pub arch: MlpArchitecture,
    pub params: Vec<f64>,
}

impl PotentialNet {
    /// Xavier hidden layers and a zero output layer, so the initial flow is
    /// the identity map.
    pub fn init<R: Rng + ?Sized>(dim: usize, hidden_widths: &[usize], rng: &mut R) -> Result<Self> {
        let arch = MlpArchitecture::new(dim + 1, hidden_widths.to_vec())?;
        let mut params = arch.xavier_init(rng);
        let last = *arch.slots().last().expect("output layer");
        params[last.weight_offset..].iter_mut().for_each(|p| *p = 0.0);
        Ok(Self { arch, params })
    }

    fn points(u: &[f64], dim: usize, t: f64) -> Vec<f64> {
        let mut pts = Vec::with_capacity(u.len() / dim * (dim + 1));
        for row in u.chunks(dim) {
            pts.extend_from_slice(row);
            pts.push(t);
        }
        pts
    }
}

impl Potential for PotentialNet {
    fn dim(&self) -> usize {
        self.arch.input_dim() - 1
    }

    fn grad_laplacian(&self, u: &[f64], t: f64) -> Result<(Vec<f64>, f64)> {
        let d = self.dim();
        let tape = MlpTape::record(&self.arch, &self.params, &Self::points(u, d, t), d, DerivOrder::Second, None)?;
        let out = tape.output();
        Ok((out.grad(0).to_vec(), out.hess_diag(0).iter().sum()))
    }
}

fn std_normal_log_density(z: &[f64]) -> f64 {
    -0.5 * z.iter().map(|v| v * v).sum::<f64>() - 0.5 * z.len() as f64 * LN_2PI
}

/// Pushes `z` through the flow; returns `G(z)` and its log-density, starting
/// from the standard-normal density of `z`.
pub fn flow_forward<P: Potential + ?Sized>(
    potential: &P,
    time_span: f64,
    euler_steps: usize,
    z: &[f64],
) -> Result<(Vec<f64>, f64)> {
    if euler_steps == 0 {
        return Err(Error::Config("flow needs at least one Euler step".into()));
    }
    if z.len() != potential.dim() {
        return Err(Error::Dimension {
            context: "flow input",
            expected: potential.dim(),
            actual: z.len(),
        });
    }
    let dt = time_span / euler_steps as f64;
    let mut u = z.to_vec();
    let mut logp = std_normal_log_density(z);
    for i in 0..euler_steps {
        let t = i as f64 * dt;
        let (g, lap) = potential.grad_laplacian(&u, t)?;
        for (ui, gi) in u.iter_mut().zip(&g) {
            *ui += dt * gi;
        }
        logp -= dt * lap;
        if !logp.is_finite() || u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "flow trajectory (Euler step)",
                index: i + 1,
            });
        }
    }
    Ok((u, logp))
}

#[derive(Debug, Clone)]
pub struct FlowFit {
    pub net: PotentialNet,
    /// Mean KL estimate (up to the target's normalizing constant) per block.
    pub objective_trace: Vec<f64>,
    pub skipped_steps: usize,
}

/// Batched forward pass keeping one tape per Euler step.
struct Trajectory<'a> {
    tapes: Vec<MlpTape<'a>>,
    u: Vec<f64>,
    logp: Vec<f64>,
}

fn run_batch<'a>(net: &'a PotentialNet, params: &'a [f64], config: &FlowConfig, z: &[f64], keep_tapes: bool) -> Result<Trajectory<'a>> {
    let d = net.arch.input_dim() - 1;
    let nz = z.len() / d;
    let dt = config.time_span / config.euler_steps as f64;
    let mut u = z.to_vec();
    let mut logp: Vec<f64> = z.chunks(d).map(std_normal_log_density).collect();
    let mut tapes = Vec::with_capacity(if keep_tapes { config.euler_steps } else { 0 });
    for i in 0..config.euler_steps {
        let t = i as f64 * dt;
        let tape = MlpTape::record(&net.arch, params, &PotentialNet::points(&u, d, t), d, DerivOrder::Second, None)?;
        let out = tape.output();
        for p in 0..nz {
            for (ui, gi) in u[p * d..(p + 1) * d].iter_mut().zip(out.grad(p)) {
                *ui += dt * gi;
            }
            logp[p] -= dt * out.hess_diag(p).iter().sum::<f64>();
        }
        if keep_tapes {
            tapes.push(tape);
        }
    }
    Ok(Trajectory { tapes, u, logp })
}

/// Batch KL estimate and its parameter gradient (written into `grad`), or
/// `None` if anything along the way is non-finite.
fn batch_loss_grad<D: Differentiable + ?Sized>(
    net: &PotentialNet,
    params: &[f64],
    config: &FlowConfig,
    z: &[f64],
    target: &D,
    grad: &mut [f64],
) -> Option<f64> {
    let d = target.dim();
    let nz = z.len() / d;
    let inv_b = 1.0 / nz as f64;
    let dt = config.time_span / config.euler_steps as f64;
    let traj = run_batch(net, params, config, z, true).ok()?;
    let mut loss = 0.0;
    let mut g_target = vec![0.0; d];
    // Adjoint of the final positions.
    let mut ubar = vec![0.0; nz * d];
    for p in 0..nz {
        let lp = target.value_and_grad(&traj.u[p * d..(p + 1) * d], &mut g_target).ok()?;
        if !lp.is_finite() || !traj.logp[p].is_finite() {
            return None;
        }
        loss += inv_b * (traj.logp[p] - lp);
        for (b, g) in ubar[p * d..(p + 1) * d].iter_mut().zip(&g_target) {
            *b = -inv_b * g;
        }
    }
    grad.iter_mut().for_each(|v| *v = 0.0);
    let mut input_grad = vec![0.0; nz * (d + 1)];
    for tape in traj.tapes.iter().rev() {
        let mut adj = JetBatch::zeros(nz, d, DerivOrder::Second);
        for p in 0..nz {
            for (a, b) in adj.grad_mut(p).iter_mut().zip(&ubar[p * d..(p + 1) * d]) {
                *a = dt * b;
            }
            adj.hess_diag_mut(p).iter_mut().for_each(|h| *h = -dt * inv_b);
        }
        input_grad.iter_mut().for_each(|v| *v = 0.0);
        tape.backward(&adj, grad, Some(&mut input_grad));
        for p in 0..nz {
            for k in 0..d {
                ubar[p * d + k] += input_grad[p * (d + 1) + k];
            }
        }
    }
    (loss.is_finite() && grad.iter().all(|g| g.is_finite())).then_some(loss)
}

/// Trains the potential to minimize `E_z[log p_T(G(z)) - log target(G(z))]`.
pub fn flow_fit<D: Differentiable + ?Sized>(target: &D, config: &FlowConfig) -> Result<FlowFit> {
    let d = target.dim();
    if config.euler_steps == 0 || config.batch == 0 {
        return Err(Error::Config("flow needs positive Euler steps and batch size".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut net = PotentialNet::init(d, &config.hidden_widths, &mut rng)?;
    let n_params = net.params.len();
    let mut adam = AdamState::new(n_params, config.adam);
    let mut z = vec![0.0; config.batch * d];
    let mut grad = vec![0.0; n_params];
    let mut trace = Vec::new();
    let (mut block_sum, mut block_n) = (0.0, 0usize);
    let (mut bad_run, mut skipped) = (0usize, 0usize);

    for step in 0..config.train_steps {
        z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        let mut params = std::mem::take(&mut net.params);
        let outcome = batch_loss_grad(&net, &params, config, &z, target, &mut grad);
        match outcome {
            Some(loss) => {
                bad_run = 0;
                adam.step(&mut params, &grad);
                block_sum += loss;
                block_n += 1;
                if block_n == config.trace_every.max(1) {
                    trace.push(block_sum / block_n as f64);
                    block_sum = 0.0;
                    block_n = 0;
                }
            }
            None => {
                bad_run += 1;
                skipped += 1;
            }
        }
        net.params = params;
        if bad_run >= PATIENCE {
            return Err(Error::Divergence {
                method: "normalizing flow",
                steps: step + 1,
                last: trace,
            });
        }
    }
    if block_n > 0 {
        trace.push(block_sum / block_n as f64);
    }
    Ok(FlowFit {
        net,
        objective_trace: trace,
        skipped_steps: skipped,
    })
}

/// Mean KL estimate of a trained flow against `target` over `count` draws.
pub fn flow_kl_estimate<D: Differentiable + ?Sized>(
    target: &D,
    net: &PotentialNet,
    config: &FlowConfig,
    count: usize,
    seed: u64,
) -> Result<f64> {
    let d = target.dim();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let z: Vec<f64> = (0..count * d).map(|_| rng.sample(StandardNormal)).collect();
    let traj = run_batch(net, &net.params, config, &z, false)?;
    let mut total = 0.0;
    for p in 0..count {
        total += traj.logp[p] - target.value(&traj.u[p * d..(p + 1) * d])?;
    }
    Ok(total / count as f64)
}

/// `count` independent draws `G(z)`.
pub fn flow_sample(net: &PotentialNet, config: &FlowConfig, count: usize, seed: u64) -> Result<PosteriorSamples> {
    let d = net.arch.input_dim() - 1;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut draws = Vec::with_capacity(count);
    let chunk = 1024;
    let mut remaining = count;
    while remaining > 0 {
        let n = remaining.min(chunk);
        let z: Vec<f64> = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
        let traj = run_batch(net, &net.params, config, &z, false)?;
        if let Some(i) = traj.u.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "flow sample",
                index: i,
            });
        }
        draws.extend(traj.u.chunks(d).map(|c| c.to_vec()));
        remaining -= n;
    }
    Ok(PosteriorSamples {
        draws,
        acceptance_rate: None,
        seed,
        sampler: "dnf".into(),
    })
}
