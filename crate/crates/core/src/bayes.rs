//! Noisy sensor data, the unnormalized log-posterior over surrogate (and PDE)
//! parameters, and pointwise predictive statistics.
//!
//! The likelihood keeps its Gaussian normalizing constants. Priors are
//! independent standard normals on the surrogate block; unknown PDE
//! coefficients use their declared Gaussian prior.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, first_non_finite, Error, Result};
use crate::mlp::{DerivOrder, JetBatch};
use crate::pde::{Field, PdeProblem};
use crate::surrogate::{PreparedPoints, Surrogate};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// A scalar function of a flat parameter vector with an exact gradient.
pub trait Differentiable: Sync {
    fn dim(&self) -> usize;

    fn value(&self, theta: &[f64]) -> Result<f64>;

    /// Overwrites `grad` with the gradient and returns the value.
    fn value_and_grad(&self, theta: &[f64], grad: &mut [f64]) -> Result<f64>;
}

/// Wraps a closure `f(theta, grad)`; the closure fills `grad` when given one.
pub struct FnDifferentiable<F> {
    dim: usize,
    f: F,
}

impl<F> FnDifferentiable<F>
where
    F: Fn(&[f64], Option<&mut [f64]>) -> f64 + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> Differentiable for FnDifferentiable<F>
where
    F: Fn(&[f64], Option<&mut [f64]>) -> f64 + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, theta: &[f64]) -> Result<f64> {
        Ok((self.f)(theta, None))
    }

    fn value_and_grad(&self, theta: &[f64], grad: &mut [f64]) -> Result<f64> {
        grad.iter_mut().for_each(|g| *g = 0.0);
        Ok((self.f)(theta, Some(grad)))
    }
}

/// Exact gradient of `functional` at `theta`, rejecting non-finite entries.
pub fn param_gradient<D: Differentiable + ?Sized>(functional: &D, theta: &[f64]) -> Result<Vec<f64>> {
    if theta.len() != functional.dim() {
        return Err(Error::Dimension {
            context: "parameter vector",
            expected: functional.dim(),
            actual: theta.len(),
        });
    }
    let mut grad = vec![0.0; theta.len()];
    let value = functional.value_and_grad(theta, &mut grad)?;
    if !value.is_finite() {
        return Err(Error::NonFinite {
            context: "functional value",
            index: 0,
        });
    }
    check_finite(&grad, "parameter gradient")?;
    Ok(grad)
}

/// `-|theta|^2 / 2 - (d/2) log(2 pi)`.
pub fn log_prior(theta: &[f64]) -> Result<f64> {
    check_finite(theta, "parameter vector")?;
    let sq: f64 = theta.iter().map(|t| t * t).sum();
    Ok(-0.5 * sq - 0.5 * theta.len() as f64 * LN_2PI)
}

/// One noisy measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: Vec<f64>,
    pub value: f64,
    pub sigma: f64,
}

/// Measurements of `u`, of the forcing `f`, and of the boundary trace.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SensorDataset {
    pub u: Vec<Observation>,
    pub f: Vec<Observation>,
    pub b: Vec<Observation>,
}

impl SensorDataset {
    pub fn n_u(&self) -> usize {
        self.u.len()
    }

    pub fn n_f(&self) -> usize {
        self.f.len()
    }

    pub fn n_b(&self) -> usize {
        self.b.len()
    }

    /// Checks noise scales and sensor placement against the problem.
    pub fn validate(&self, problem: &PdeProblem) -> Result<()> {
        for (set, obs, boundary) in [("u", &self.u, false), ("f", &self.f, false), ("b", &self.b, true)] {
            for o in obs.iter() {
                if !(o.sigma > 0.0) || !o.sigma.is_finite() {
                    return Err(Error::Config(format!(
                        "{set}-sensor at {:?} has noise std {}; must be positive",
                        o.x, o.sigma
                    )));
                }
                if !o.value.is_finite() {
                    return Err(Error::Config(format!("{set}-sensor at {:?} has non-finite value", o.x)));
                }
                let ok = if boundary {
                    problem.on_boundary(&o.x)
                } else {
                    problem.contains(&o.x)
                };
                if !ok {
                    return Err(Error::Domain {
                        context: if boundary { "problem boundary" } else { "problem domain" },
                        point: o.x.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Copy with every noise std multiplied by `c`.
    pub fn with_scaled_noise(&self, c: f64) -> Self {
        let scale = |v: &[Observation]| {
            v.iter()
                .map(|o| Observation {
                    sigma: o.sigma * c,
                    ..o.clone()
                })
                .collect()
        };
        Self {
            u: scale(&self.u),
            f: scale(&self.f),
            b: scale(&self.b),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Infer the solution with every PDE coefficient known.
    Forward,
    /// Also infer the problem's unknown coefficients.
    Inverse,
}

/// Log-likelihood split by observation set.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LikelihoodTerms {
    pub u: f64,
    pub f: f64,
    pub b: f64,
}

impl LikelihoodTerms {
    pub fn total(&self) -> f64 {
        self.u + self.f + self.b
    }
}

/// Ordered posterior draws plus sampler metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSamples {
    pub draws: Vec<Vec<f64>>,
    pub acceptance_rate: Option<f64>,
    pub seed: u64,
    pub sampler: String,
}

impl PosteriorSamples {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Mean and population std of one component over all draws.
    pub fn component_stats(&self, index: usize) -> Result<(f64, f64)> {
        let rows: Vec<Vec<f64>> = self.draws.iter().map(|d| vec![d[index]]).collect();
        let (m, s) = mean_std(&rows)?;
        Ok((m[0], s[0]))
    }
}

/// Pointwise mean and population (divide by M) standard deviation.
pub fn mean_std(rows: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    let first = rows
        .first()
        .ok_or_else(|| Error::Argument("predictive statistics need at least one sample".into()))?;
    let p = first.len();
    let mut mean = vec![0.0; p];
    let mut m2 = vec![0.0; p];
    for (i, row) in rows.iter().enumerate() {
        if row.len() != p {
            return Err(Error::Dimension {
                context: "sample row",
                expected: p,
                actual: row.len(),
            });
        }
        let n = (i + 1) as f64;
        for ((m, s), &v) in mean.iter_mut().zip(m2.iter_mut()).zip(row) {
            let delta = v - *m;
            *m += delta / n;
            *s += delta * (v - *m);
        }
    }
    let n = rows.len() as f64;
    let std = m2.iter().map(|s| (s / n).max(0.0).sqrt()).collect();
    Ok((mean, std))
}

/// Data term constants per observation: `(value, 1/sigma^2, -log(2 pi sigma^2)/2)`.
fn prepare_obs(obs: &[Observation]) -> Vec<(f64, f64, f64)> {
    obs.iter()
        .map(|o| (o.value, 1.0 / (o.sigma * o.sigma), -0.5 * (LN_2PI + 2.0 * o.sigma.ln())))
        .collect()
}

fn flatten(obs: &[Observation]) -> Vec<f64> {
    obs.iter().flat_map(|o| o.x.iter().copied()).collect()
}

/// Unnormalized log-posterior for one problem, surrogate and dataset.
///
/// Parameters are the surrogate block followed, in inverse mode, by the
/// problem's unknown coefficients in declaration order.
#[derive(Debug, Clone)]
pub struct LogPosteriorTarget {
    problem: PdeProblem,
    surrogate: Surrogate,
    data: SensorDataset,
    mode: Mode,
    n_net: usize,
    /// `u` sensors followed by `b` sensors.
    value_points: PreparedPoints,
    value_obs: Vec<(f64, f64, f64)>,
    f_points: PreparedPoints,
    f_obs: Vec<(f64, f64, f64)>,
    fixed_unknowns: Vec<f64>,
}

impl LogPosteriorTarget {
    pub fn new(problem: PdeProblem, surrogate: Surrogate, data: SensorDataset, mode: Mode) -> Result<Self> {
        match (mode, problem.n_unknowns()) {
            (Mode::Inverse, 0) => {
                return Err(Error::Config(format!(
                    "inverse mode needs an unknown parameter, '{}' declares none",
                    problem.name
                )))
            }
            (Mode::Forward, n) if n > 0 => {
                return Err(Error::Config(format!(
                    "forward mode needs all parameters known, '{}' declares {n} unknown",
                    problem.name
                )))
            }
            _ => {}
        }
        if surrogate.input_dim() != problem.spatial_dim() {
            return Err(Error::Dimension {
                context: "surrogate input",
                expected: problem.spatial_dim(),
                actual: surrogate.input_dim(),
            });
        }
        if problem.operator.is_none() && !data.f.is_empty() {
            return Err(Error::Config(format!("'{}' has no operator for f-sensors", problem.name)));
        }
        data.validate(&problem)?;

        let mut value_locs = flatten(&data.u);
        value_locs.extend(flatten(&data.b));
        let value_points = surrogate.prepare(&value_locs)?;
        let f_points = surrogate.prepare(&flatten(&data.f))?;
        let mut value_obs = prepare_obs(&data.u);
        value_obs.extend(prepare_obs(&data.b));
        let f_obs = prepare_obs(&data.f);
        Ok(Self {
            n_net: surrogate.n_params(),
            fixed_unknowns: problem.true_unknowns(),
            problem,
            surrogate,
            data,
            mode,
            value_points,
            value_obs,
            f_points,
            f_obs,
        })
    }

    pub fn problem(&self) -> &PdeProblem {
        &self.problem
    }

    pub fn surrogate(&self) -> &Surrogate {
        &self.surrogate
    }

    pub fn data(&self) -> &SensorDataset {
        &self.data
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Length of the surrogate block.
    pub fn n_surrogate(&self) -> usize {
        self.n_net
    }

    pub fn n_unknowns(&self) -> usize {
        match self.mode {
            Mode::Forward => 0,
            Mode::Inverse => self.problem.n_unknowns(),
        }
    }

    fn unknowns<'a>(&'a self, theta: &'a [f64]) -> &'a [f64] {
        match self.mode {
            Mode::Forward => &self.fixed_unknowns,
            Mode::Inverse => &theta[self.n_net..],
        }
    }

    fn check_len(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::Dimension {
                context: "parameter vector",
                expected: self.dim(),
                actual: theta.len(),
            });
        }
        Ok(())
    }

    /// Prior draw of the full parameter vector.
    pub fn sample_prior<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut theta = self.surrogate.sample_prior(rng);
        if self.mode == Mode::Inverse {
            for p in &self.problem.unknown_params {
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                theta.push(p.prior_mean + p.prior_std * z);
            }
        }
        theta
    }

    pub fn log_prior(&self, theta: &[f64]) -> Result<f64> {
        self.check_len(theta)?;
        let mut lp = log_prior(&theta[..self.n_net])?;
        if self.mode == Mode::Inverse {
            for (p, &k) in self.problem.unknown_params.iter().zip(&theta[self.n_net..]) {
                if !k.is_finite() {
                    return Err(Error::NonFinite {
                        context: "parameter vector",
                        index: self.n_net,
                    });
                }
                let z = (k - p.prior_mean) / p.prior_std;
                lp += -0.5 * z * z - p.prior_std.ln() - 0.5 * LN_2PI;
            }
        }
        Ok(lp)
    }

    fn log_prior_grad(&self, theta: &[f64], grad: &mut [f64]) {
        for (g, t) in grad[..self.n_net].iter_mut().zip(&theta[..self.n_net]) {
            *g -= t;
        }
        if self.mode == Mode::Inverse {
            for (i, p) in self.problem.unknown_params.iter().enumerate() {
                let j = self.n_net + i;
                grad[j] -= (theta[j] - p.prior_mean) / (p.prior_std * p.prior_std);
            }
        }
    }

    pub fn log_likelihood_terms(&self, theta: &[f64]) -> Result<LikelihoodTerms> {
        self.check_len(theta)?;
        self.likelihood(theta, None, None)
    }

    pub fn log_likelihood(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.log_likelihood_terms(theta)?.total())
    }

    pub fn log_posterior(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.log_likelihood(theta)? + self.log_prior(theta)?)
    }

    /// Log-likelihood with an optional dropout mask; adds its gradient into
    /// `grad` when given.
    pub fn log_likelihood_masked(
        &self,
        theta: &[f64],
        mask: Option<&[f64]>,
        grad: Option<&mut [f64]>,
    ) -> Result<LikelihoodTerms> {
        self.check_len(theta)?;
        self.likelihood(theta, mask, grad)
    }

    fn likelihood(&self, theta: &[f64], mask: Option<&[f64]>, mut grad: Option<&mut [f64]>) -> Result<LikelihoodTerms> {
        let mut terms = LikelihoodTerms::default();
        let n_u = self.data.u.len();
        let mut bad: Option<usize> = None;

        if !self.value_obs.is_empty() {
            let want = grad.is_some();
            self.value_points.eval(
                &self.surrogate,
                theta,
                DerivOrder::Value,
                mask,
                grad.as_deref_mut(),
                |out| {
                    if let Some(i) = first_non_finite(&out.value) {
                        bad = Some(i);
                        return None;
                    }
                    let mut adj = JetBatch::zeros(out.n_points, out.n_deriv, DerivOrder::Value);
                    for (p, (&m, &(obs, inv_var, c))) in out.value.iter().zip(&self.value_obs).enumerate() {
                        let r = m - obs;
                        let term = c - 0.5 * r * r * inv_var;
                        if p < n_u {
                            terms.u += term;
                        } else {
                            terms.b += term;
                        }
                        adj.value[p] = -r * inv_var;
                    }
                    want.then_some(adj)
                },
            )?;
            if let Some(i) = bad {
                return Err(Error::NonFinite {
                    context: "surrogate output",
                    index: i,
                });
            }
        }

        if !self.f_obs.is_empty() {
            let op = self.problem.operator.expect("checked at construction");
            let unknowns = self.unknowns(theta);
            let mut unknown_grad = vec![0.0; self.n_unknowns()];
            let want = grad.is_some();
            self.f_points.eval(
                &self.surrogate,
                theta,
                DerivOrder::Second,
                mask,
                grad.as_deref_mut(),
                |out| {
                    let nd = out.n_deriv;
                    let mut adj = JetBatch::zeros(out.n_points, nd, DerivOrder::Second);
                    for (p, &(obs, inv_var, c)) in self.f_obs.iter().enumerate() {
                        let u = out.value[p];
                        let lap: f64 = out.hess_diag(p).iter().sum();
                        let m = op.apply(u, lap, unknowns);
                        if !m.is_finite() {
                            bad = Some(p);
                            return None;
                        }
                        let r = m - obs;
                        terms.f += c - 0.5 * r * r * inv_var;
                        let w = -r * inv_var;
                        let part = op.partials(u, unknowns);
                        adj.value[p] = w * part.d_value;
                        adj.hess_diag_mut(p).iter_mut().for_each(|h| *h = w * part.d_hess);
                        if let Some((i, dk)) = part.d_unknown {
                            if let Some(g) = unknown_grad.get_mut(i) {
                                *g += w * dk;
                            }
                        }
                    }
                    want.then_some(adj)
                },
            )?;
            if let Some(i) = bad {
                return Err(Error::NonFinite {
                    context: "residual",
                    index: i,
                });
            }
            if let Some(g) = grad {
                for (gi, ui) in g[self.n_net..].iter_mut().zip(&unknown_grad) {
                    *gi += ui;
                }
            }
        }
        Ok(terms)
    }

    /// `u` or `f` of the surrogate at a batch of points.
    pub fn predict(&self, theta: &[f64], points: &[f64], field: Field) -> Result<Vec<f64>> {
        self.predict_masked(theta, points, field, None)
    }

    /// [`predict`](Self::predict) with an optional dropout mask on the hidden
    /// units.
    pub fn predict_masked(&self, theta: &[f64], points: &[f64], field: Field, mask: Option<&[f64]>) -> Result<Vec<f64>> {
        self.check_len(theta)?;
        let prepared = self.surrogate.prepare(points)?;
        let jets = |order| prepared.eval(&self.surrogate, theta, order, mask, None, |_| None);
        match field {
            Field::U => Ok(jets(DerivOrder::Value)?.value),
            Field::F => {
                let op = self
                    .problem
                    .operator
                    .ok_or_else(|| Error::Config(format!("'{}' has no forcing term", self.problem.name)))?;
                let jets = jets(DerivOrder::Second)?;
                let unknowns = self.unknowns(theta);
                Ok((0..jets.n_points)
                    .map(|p| op.apply(jets.value[p], jets.hess_diag(p).iter().sum(), unknowns))
                    .collect())
            }
        }
    }

    /// Pointwise predictive mean and population std over posterior draws.
    pub fn predictive_stats(
        &self,
        samples: &PosteriorSamples,
        points: &[f64],
        field: Field,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        if samples.is_empty() {
            return Err(Error::Argument("no posterior samples".into()));
        }
        let rows = samples
            .draws
            .par_iter()
            .map(|theta| self.predict(theta, points, field))
            .collect::<Result<Vec<_>>>()?;
        mean_std(&rows)
    }
}

impl Differentiable for LogPosteriorTarget {
    fn dim(&self) -> usize {
        self.n_net + self.n_unknowns()
    }

    fn value(&self, theta: &[f64]) -> Result<f64> {
        self.log_posterior(theta)
    }

    fn value_and_grad(&self, theta: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.check_len(theta)?;
        let prior = self.log_prior(theta)?;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let like = self.likelihood(theta, None, Some(grad))?.total();
        self.log_prior_grad(theta, grad);
        Ok(like + prior)
    }
}

/// Log-density of a scalar Gaussian, used by tests and diagnostics.
pub fn normal_log_density(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    -0.5 * z * z - std.ln() - 0.5 * (2.0 * PI).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::MlpArchitecture;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn obs(x: f64, value: f64, sigma: f64) -> Observation {
        Observation {
            x: vec![x],
            value,
            sigma,
        }
    }

    fn small_target(problem: &str, mode: Mode, seed: u64) -> LogPosteriorTarget {
        let p = PdeProblem::catalog(problem).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let f = (0..6)
            .map(|i| obs(-0.6 + 0.24 * i as f64, rng.random::<f64>() - 0.5, 0.1))
            .collect();
        let data = SensorDataset {
            u: vec![obs(0.2, 0.3, 0.05)],
            f,
            b: vec![obs(-0.7, 0.1, 0.01), obs(0.7, -0.2, 0.01)],
        };
        let arch = MlpArchitecture::new(1, vec![6, 5]).unwrap();
        LogPosteriorTarget::new(p, Surrogate::Mlp(arch), data, mode).unwrap()
    }

    #[test]
    fn log_prior_closed_forms() {
        assert!((log_prior(&[0.0, 0.0]).unwrap() + 1.837877).abs() < 1e-6);
        assert!((log_prior(&[1.0]).unwrap() - (-0.5 - 0.5 * LN_2PI)).abs() < 1e-15);
        assert!(log_prior(&[f64::NAN]).is_err());
    }

    #[test]
    fn perfect_fit_leaves_only_constants() {
        let p = PdeProblem::catalog("regression").unwrap();
        let arch = MlpArchitecture::new(1, vec![3]).unwrap();
        let theta = vec![0.0; arch.n_params()];
        let data = SensorDataset {
            u: vec![obs(-0.5, 0.0, 1.0), obs(0.5, 0.0, 1.0)],
            ..Default::default()
        };
        let t = LogPosteriorTarget::new(p, Surrogate::Mlp(arch), data, Mode::Forward).unwrap();
        assert!((t.log_likelihood(&theta).unwrap() + LN_2PI).abs() < 1e-14);
    }

    #[test]
    fn unit_standardized_residual() {
        let p = PdeProblem::catalog("poisson1d").unwrap();
        let arch = MlpArchitecture::new(1, vec![3]).unwrap();
        let theta = vec![0.0; arch.n_params()];
        let sigma = 0.3;
        let data = SensorDataset {
            f: vec![obs(0.1, sigma, sigma)],
            ..Default::default()
        };
        let t = LogPosteriorTarget::new(p, Surrogate::Mlp(arch), data, Mode::Forward).unwrap();
        let expected = -0.5 * (2.0 * PI * sigma * sigma).ln() - 0.5;
        assert!((t.log_likelihood(&theta).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn empty_dataset_gives_prior() {
        let p = PdeProblem::catalog("poisson1d").unwrap();
        let arch = MlpArchitecture::new(1, vec![4]).unwrap();
        let t = LogPosteriorTarget::new(p, Surrogate::Mlp(arch), SensorDataset::default(), Mode::Forward).unwrap();
        let theta: Vec<f64> = (0..t.dim()).map(|i| (i as f64 * 0.37).sin()).collect();
        assert_eq!(t.log_posterior(&theta).unwrap(), t.log_prior(&theta).unwrap());
        assert_eq!(t.log_likelihood(&theta).unwrap(), 0.0);
    }

    #[test]
    fn posterior_is_sum_of_likelihood_and_prior() {
        let t = small_target("poisson1d", Mode::Forward, 3);
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let theta = t.sample_prior(&mut rng);
        let sum = t.log_likelihood(&theta).unwrap() + t.log_prior(&theta).unwrap();
        assert_eq!(t.log_posterior(&theta).unwrap(), sum);
    }

    #[test]
    fn mode_must_match_declared_unknowns() {
        let arch = MlpArchitecture::new(1, vec![4]).unwrap();
        let fwd = PdeProblem::catalog("poisson1d").unwrap();
        let inv = PdeProblem::catalog("inverse_reaction1d").unwrap();
        let s = Surrogate::Mlp(arch);
        assert!(LogPosteriorTarget::new(fwd, s.clone(), Default::default(), Mode::Inverse).is_err());
        assert!(LogPosteriorTarget::new(inv, s, Default::default(), Mode::Forward).is_err());
    }

    #[test]
    fn invalid_sensors_are_rejected() {
        let p = PdeProblem::catalog("poisson1d").unwrap();
        let s = Surrogate::Mlp(MlpArchitecture::new(1, vec![4]).unwrap());
        let zero_noise = SensorDataset {
            f: vec![obs(0.0, 1.0, 0.0)],
            ..Default::default()
        };
        let interior_b = SensorDataset {
            b: vec![obs(0.1, 1.0, 0.1)],
            ..Default::default()
        };
        let outside = SensorDataset {
            u: vec![obs(0.9, 1.0, 0.1)],
            ..Default::default()
        };
        for data in [zero_noise, interior_b, outside] {
            assert!(LogPosteriorTarget::new(p.clone(), s.clone(), data, Mode::Forward).is_err());
        }
    }

    #[test]
    fn gradient_matches_finite_differences_in_both_modes() {
        for (name, mode) in [
            ("nonlinear_poisson1d", Mode::Forward),
            ("inverse_reaction1d", Mode::Inverse),
        ] {
            let t = small_target(name, mode, 5);
            let mut rng = ChaCha20Rng::seed_from_u64(6);
            let theta: Vec<f64> = t.sample_prior(&mut rng).iter().map(|v| 0.5 * v).collect();
            let g = param_gradient(&t, &theta).unwrap();
            let h = 1e-6;
            for i in 0..theta.len() {
                let mut up = theta.clone();
                let mut dn = theta.clone();
                up[i] += h;
                dn[i] -= h;
                let fd = (t.log_posterior(&up).unwrap() - t.log_posterior(&dn).unwrap()) / (2.0 * h);
                let scale = fd.abs().max(g[i].abs()).max(1.0);
                assert!((fd - g[i]).abs() / scale < 1e-5, "{name} component {i}: {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn mean_std_small_cases() {
        let (m, s) = mean_std(&[vec![0.0, 3.0], vec![2.0, 3.0]]).unwrap();
        assert_eq!(m, vec![1.0, 3.0]);
        assert_eq!(s, vec![1.0, 0.0]);
        assert!(matches!(mean_std(&[]), Err(Error::Argument(_))));
    }

    #[test]
    fn normal_log_density_matches_prior() {
        let v = normal_log_density(0.4, 0.0, 1.0);
        assert!((v - log_prior(&[0.4]).unwrap()).abs() < 1e-15);
    }
}
