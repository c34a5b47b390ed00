//! One end-to-end run: data, surrogate, estimator, predictions, summary.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::{Estimator, ExperimentConfig, SurrogateKind};
use crate::baselines::{dropout_predict, dropout_train, estimate_prior_kernel, gp_regress, pinn_train};
use crate::bayes::{Differentiable, LogPosteriorTarget, Mode, PosteriorSamples};
use crate::datagen::{catalog_noise, catalog_plan, dataset_to_csv, generate_sensors};
use crate::error::{Error, Result};
use crate::kl::kl_eigenpairs;
use crate::mlp::{MlpArchitecture, PriorScales};
use crate::pde::{Field, PdeProblem};
use crate::samplers::{flow_fit, AdamConfig, AdamState, flow_sample, hmc_sample, vi_fit, vi_sample, ViParams};
use crate::surrogate::Surrogate;

const INIT_STREAM: u64 = 7;
/// Offset between the fitting seed and the seed for drawing from a fitted
/// approximation.
const DRAW_SEED_OFFSET: u64 = 0x5eed;

/// Deterministic sampler statistics; `None` where not applicable.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SamplerSummary {
    pub acceptance_rate: Option<f64>,
    pub final_step_size: Option<f64>,
    pub divergences: Option<usize>,
    pub final_objective: Option<f64>,
    pub skipped_steps: Option<usize>,
    pub warnings: Vec<String>,
}

/// Contents of `summary.json`. Reproducible byte-for-byte under a fixed
/// config; wall time lives in `diagnostics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub experiment: String,
    pub k_true: Option<f64>,
    pub k_mean: Option<f64>,
    pub k_std: Option<f64>,
    pub rel_l2_u: f64,
    pub rel_l2_f: Option<f64>,
    pub mean_std_u: f64,
    pub mean_std_f: Option<f64>,
    /// Posterior draws (or prediction passes) behind the statistics.
    pub n_draws: usize,
    pub sampler: SamplerSummary,
    pub config: ExperimentConfig,
    pub engine_version: String,
}

/// Pointwise prediction of one field on the evaluation grid.
#[derive(Debug, Clone)]
pub struct FieldPrediction {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub exact: Vec<f64>,
}

struct Estimate {
    u: (Vec<f64>, Vec<f64>),
    f: Option<(Vec<f64>, Vec<f64>)>,
    k: Option<(f64, Option<f64>)>,
    n_draws: usize,
    sampler: SamplerSummary,
    traces: Value,
}

/// Uniform grid over the problem box, point-major; in 2D `x` varies slowest.
pub fn evaluation_grid(problem: &PdeProblem, cfg: &ExperimentConfig) -> Vec<f64> {
    let axis = |(lo, hi): (f64, f64), n: usize| -> Vec<f64> {
        (0..n)
            .map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
            .collect()
    };
    match problem.domain.as_slice() {
        [d] => axis(*d, cfg.grid.points_1d),
        [dx, dy] => {
            let (xs, ys) = (axis(*dx, cfg.grid.points_2d), axis(*dy, cfg.grid.points_2d));
            xs.iter().flat_map(|&x| ys.iter().flat_map(move |&y| [x, y])).collect()
        }
        _ => unreachable!("catalog problems are 1D or 2D"),
    }
}

/// `||mean - exact|| / ||exact||` over the grid.
pub fn relative_l2(mean: &[f64], exact: &[f64]) -> f64 {
    let num: f64 = mean.iter().zip(exact).map(|(m, e)| (m - e) * (m - e)).sum();
    let den: f64 = exact.iter().map(|e| e * e).sum();
    (num / den).sqrt()
}

/// Builds the problem, dataset and log-posterior for a config.
pub fn build_target(cfg: &ExperimentConfig) -> Result<LogPosteriorTarget> {
    let problem = PdeProblem::catalog(&cfg.experiment)?;
    let plan = match &cfg.sensors {
        Some(p) => p.clone(),
        None => catalog_plan(&cfg.experiment)?,
    };
    let noise = match cfg.noise_spec {
        Some(n) => n,
        None => catalog_noise(&cfg.experiment, cfg.noise)?,
    };
    let data = generate_sensors(&problem, &plan, &noise, cfg.data_seed)?;
    let surrogate = match cfg.surrogate {
        SurrogateKind::Bnn => Surrogate::Mlp(MlpArchitecture::new(problem.spatial_dim(), cfg.hidden_widths.clone())?),
        SurrogateKind::Kl => Surrogate::Kl(kl_eigenpairs(cfg.kl.corr_length, cfg.kl.half_width, cfg.kl.n_terms)?),
    };
    let mode = if problem.n_unknowns() > 0 { Mode::Inverse } else { Mode::Forward };
    LogPosteriorTarget::new(problem, surrogate, data, mode)
}

/// Prior draw, optionally followed by `warm_start_steps` Adam steps up the
/// log-posterior.
fn init_state(target: &LogPosteriorTarget, cfg: &ExperimentConfig) -> Result<Vec<f64>> {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    rng.set_stream(INIT_STREAM);
    let mut theta = target.sample_prior(&mut rng);
    let mut adam = AdamState::new(theta.len(), AdamConfig::default());
    let mut grad = vec![0.0; theta.len()];
    for step in 0..cfg.warm_start_steps {
        let lp = target.value_and_grad(&theta, &mut grad)?;
        if !lp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence {
                method: "warm start",
                steps: step + 1,
                last: vec![lp],
            });
        }
        grad.iter_mut().for_each(|g| *g = -*g);
        adam.step(&mut theta, &grad);
    }
    Ok(theta)
}

fn from_samples(target: &LogPosteriorTarget, samples: &PosteriorSamples, grid: &[f64]) -> Result<Estimate> {
    let u = target.predictive_stats(samples, grid, Field::U)?;
    let f = match target.problem().operator {
        Some(_) => Some(target.predictive_stats(samples, grid, Field::F)?),
        None => None,
    };
    let k = match target.n_unknowns() {
        0 => None,
        _ => {
            let (m, s) = samples.component_stats(target.n_surrogate())?;
            Some((m, Some(s)))
        }
    };
    Ok(Estimate {
        u,
        f,
        k,
        n_draws: samples.len(),
        sampler: SamplerSummary::default(),
        traces: Value::Null,
    })
}

fn estimate(cfg: &ExperimentConfig, target: &LogPosteriorTarget, grid: &[f64]) -> Result<Estimate> {
    let has_f = target.problem().operator.is_some();
    match cfg.estimator {
        Estimator::Hmc => {
            let out = hmc_sample(target, init_state(target, cfg)?, &cfg.hmc)?;
            let mut est = from_samples(target, &out.samples, grid)?;
            let d = out.diagnostics;
            est.sampler = SamplerSummary {
                acceptance_rate: Some(d.acceptance_rate),
                final_step_size: Some(d.final_step_size),
                divergences: Some(d.divergences),
                warnings: d.warnings.clone(),
                ..Default::default()
            };
            est.traces = json!({ "burn_in_acceptance": d.burn_in_acceptance });
            Ok(est)
        }
        Estimator::Vi => {
            let mu = init_state(target, cfg)?;
            let rho = vec![cfg.vi_init_rho; mu.len()];
            let fit = vi_fit(target, ViParams::new(mu, rho)?, &cfg.vi)?;
            let samples = vi_sample(&fit.params, cfg.posterior_draws, cfg.seed.wrapping_add(DRAW_SEED_OFFSET));
            let mut est = from_samples(target, &samples, grid)?;
            est.sampler = SamplerSummary {
                final_objective: fit.objective_trace.last().copied(),
                skipped_steps: Some(fit.skipped_steps),
                ..Default::default()
            };
            est.traces = json!({ "objective": fit.objective_trace });
            Ok(est)
        }
        Estimator::Dnf => {
            let fit = flow_fit(target, &cfg.flow)?;
            let samples = flow_sample(&fit.net, &cfg.flow, cfg.posterior_draws, cfg.seed.wrapping_add(DRAW_SEED_OFFSET))?;
            let mut est = from_samples(target, &samples, grid)?;
            est.sampler = SamplerSummary {
                final_objective: fit.objective_trace.last().copied(),
                skipped_steps: Some(fit.skipped_steps),
                ..Default::default()
            };
            est.traces = json!({ "objective": fit.objective_trace });
            Ok(est)
        }
        Estimator::Dropout => {
            let model = dropout_train(target, &cfg.dropout)?;
            let passes = cfg.dropout.passes;
            let u = dropout_predict(target, &model, passes, grid, Field::U)?;
            let f = if has_f {
                Some(dropout_predict(target, &model, passes, grid, Field::F)?)
            } else {
                None
            };
            let k = if target.n_unknowns() > 0 {
                let (m, s) = model.k_stats()?;
                Some((m[0], Some(s[0])))
            } else {
                None
            };
            Ok(Estimate {
                u,
                f,
                k,
                n_draws: passes,
                sampler: SamplerSummary {
                    final_objective: model.loss_trace.last().copied(),
                    ..Default::default()
                },
                traces: json!({ "loss": model.loss_trace }),
            })
        }
        Estimator::Pinn => {
            let model = pinn_train(target, &cfg.pinn)?;
            let point = |field| -> Result<(Vec<f64>, Vec<f64>)> {
                let m = target.predict(&model.params, grid, field)?;
                let z = vec![0.0; m.len()];
                Ok((m, z))
            };
            let k = (target.n_unknowns() > 0).then(|| (model.k_hat(target.n_unknowns())[0], None));
            Ok(Estimate {
                u: point(Field::U)?,
                f: if has_f { Some(point(Field::F)?) } else { None },
                k,
                n_draws: 1,
                sampler: SamplerSummary {
                    final_objective: model.loss_trace.last().copied(),
                    ..Default::default()
                },
                traces: json!({ "loss": model.loss_trace }),
            })
        }
        Estimator::Gpr => {
            let Surrogate::Mlp(arch) = target.surrogate() else {
                unreachable!("validated: gpr uses the network prior")
            };
            let data = target.data();
            let mut points: Vec<f64> = data.u.iter().flat_map(|o| o.x.clone()).collect();
            let n = data.u.len();
            points.extend_from_slice(grid);
            let est = estimate_prior_kernel(arch, &PriorScales::standard(arch), &points, cfg.prior_samples, cfg.seed)?;
            let obs: Vec<f64> = data.u.iter().map(|o| o.value).collect();
            let sig: Vec<f64> = data.u.iter().map(|o| o.sigma).collect();
            let train: Vec<usize> = (0..n).collect();
            let test: Vec<usize> = (n..est.n_points).collect();
            let u = gp_regress(|i, j| est.get(i, j), &train, &obs, &sig, &test)?;
            Ok(Estimate {
                u,
                f: None,
                k: None,
                n_draws: cfg.prior_samples,
                sampler: SamplerSummary::default(),
                traces: json!({ "kernel_mean_std_err": est.mean_std_err() }),
            })
        }
    }
}

/// CSV with columns `x[,y],mean,std,exact`.
pub fn prediction_csv(grid: &[f64], dim: usize, pred: &FieldPrediction) -> String {
    let mut s = String::from(if dim == 2 { "x,y,mean,std,exact\n" } else { "x,mean,std,exact\n" });
    for (p, x) in grid.chunks(dim).enumerate() {
        for c in x {
            let _ = write!(s, "{c:?},");
        }
        let _ = writeln!(s, "{:?},{:?},{:?}", pred.mean[p], pred.std[p], pred.exact[p]);
    }
    s
}

/// Runs one experiment and writes `prediction_u.csv`, `prediction_f.csv`
/// (when the problem has a forcing term), `data.csv`, `summary.json` and
/// `diagnostics.json` into `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    let started = Instant::now();
    let target = build_target(cfg)?;
    let problem = target.problem().clone();
    let dim = problem.spatial_dim();
    let grid = evaluation_grid(&problem, cfg);
    let exact_of = |field| -> Result<Vec<f64>> { grid.chunks(dim).map(|x| problem.exact_eval(field, x)).collect() };

    let est = estimate(cfg, &target, &grid)?;
    let u = FieldPrediction {
        mean: est.u.0,
        std: est.u.1,
        exact: exact_of(Field::U)?,
    };
    let f = match est.f {
        Some((mean, std)) => Some(FieldPrediction {
            mean,
            std,
            exact: exact_of(Field::F)?,
        }),
        None => None,
    };
    let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let summary = RunSummary {
        experiment: cfg.experiment.clone(),
        k_true: problem.unknown_params.first().map(|p| p.true_value),
        k_mean: est.k.map(|k| k.0),
        k_std: est.k.and_then(|k| k.1),
        rel_l2_u: relative_l2(&u.mean, &u.exact),
        rel_l2_f: f.as_ref().map(|f| relative_l2(&f.mean, &f.exact)),
        mean_std_u: avg(&u.std),
        mean_std_f: f.as_ref().map(|f| avg(&f.std)),
        n_draws: est.n_draws,
        sampler: est.sampler,
        config: cfg.clone(),
        engine_version: env!("CARGO_PKG_VERSION").into(),
    };

    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("prediction_u.csv"), prediction_csv(&grid, dim, &u))?;
    if let Some(f) = &f {
        fs::write(out_dir.join("prediction_f.csv"), prediction_csv(&grid, dim, f))?;
    }
    fs::write(out_dir.join("data.csv"), dataset_to_csv(target.data(), dim))?;
    fs::write(out_dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    let diagnostics = json!({
        "wall_time_seconds": started.elapsed().as_secs_f64(),
        "threads": rayon::current_num_threads(),
        "traces": est.traces,
    });
    fs::write(out_dir.join("diagnostics.json"), serde_json::to_string_pretty(&diagnostics)? + "\n")?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_covers_the_box_with_exact_endpoints() {
        let mut cfg = ExperimentConfig::defaults("allen_cahn2d", super::super::Profile::Desk).unwrap();
        cfg.grid.points_2d = 3;
        let g = evaluation_grid(&PdeProblem::catalog("allen_cahn2d").unwrap(), &cfg);
        assert_eq!(g.len(), 18);
        assert_eq!(&g[..4], &[-1.0, -1.0, -1.0, 0.0]);
        assert_eq!(&g[16..], &[1.0, 1.0]);
        let g1 = evaluation_grid(&PdeProblem::catalog("poisson1d").unwrap(), &cfg);
        assert_eq!(g1.len(), 201);
        assert_eq!((g1[0], g1[200]), (-0.7, 0.7));
        assert!((g1[100]).abs() < 1e-15);
    }

    #[test]
    fn relative_l2_of_a_scaled_field() {
        let e = [1.0, -2.0, 2.0];
        let m: Vec<f64> = e.iter().map(|v| 1.1 * v).collect();
        assert!((relative_l2(&m, &e) - 0.1).abs() < 1e-12);
    }
}
