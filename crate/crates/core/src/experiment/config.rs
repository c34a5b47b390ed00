//! Experiment configuration: a JSON document layered over a settings profile.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::baselines::{DropoutConfig, PinnConfig};
use crate::datagen::{NoiseSpec, SensorPlan, RNG_ALGORITHM};
use crate::error::{Error, Result};
use crate::pde::{PdeProblem, CATALOG};
use crate::samplers::{FlowConfig, HmcConfig, ViConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurrogateKind {
    Bnn,
    Kl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Hmc,
    Vi,
    Dnf,
    Dropout,
    Pinn,
    Gpr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Full sample and step counts.
    #[default]
    Paper,
    /// Reduced counts for quick runs and tests.
    Desk,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KlSettings {
    pub corr_length: f64,
    pub half_width: f64,
    pub n_terms: usize,
}

impl Default for KlSettings {
    fn default() -> Self {
        Self {
            corr_length: 0.25,
            half_width: 1.0,
            n_terms: 20,
        }
    }
}

/// Uniform evaluation grid over the problem domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub points_1d: usize,
    /// Points per axis in 2D.
    pub points_2d: usize,
}

/// Fully resolved experiment settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub surrogate: SurrogateKind,
    pub estimator: Estimator,
    pub profile: Profile,
    /// Noise case; the catalog maps it to per-set stds.
    pub noise: f64,
    /// Seeds every sampler and optimizer.
    pub seed: u64,
    /// Seeds sensor placement and noise.
    pub data_seed: u64,
    pub rng: String,
    pub hidden_widths: Vec<usize>,
    pub kl: KlSettings,
    pub hmc: HmcConfig,
    pub vi: ViConfig,
    /// Std-parameter start for VI, before the softplus.
    pub vi_init_rho: f64,
    /// Adam steps on the log-posterior from the prior draw before HMC or VI
    /// starts. Zero keeps the plain prior draw.
    pub warm_start_steps: usize,
    pub flow: FlowConfig,
    pub dropout: DropoutConfig,
    pub pinn: PinnConfig,
    /// Draws taken from a fitted VI or flow approximation.
    pub posterior_draws: usize,
    /// Prior draws behind the GP kernel estimate.
    pub prior_samples: usize,
    pub grid: GridSpec,
    /// Overrides the catalog sensor layout.
    pub sensors: Option<SensorPlan>,
    /// Overrides the catalog noise stds.
    pub noise_spec: Option<NoiseSpec>,
}

impl ExperimentConfig {
    /// Profile defaults for a catalog experiment.
    pub fn defaults(experiment: &str, profile: Profile) -> Result<Self> {
        let problem = PdeProblem::catalog(experiment)?;
        let inverse = problem.n_unknowns() > 0;
        let desk = profile == Profile::Desk;
        let pick = |paper: usize, d: usize| if desk { d } else { paper };

        let hmc = HmcConfig {
            burn_in: pick(2000, 500),
            total_samples: pick(15_000, 2000),
            keep_last: pick(10_000, 2000),
            ..HmcConfig::default()
        };
        let vi = ViConfig {
            steps: pick(200_000, 20_000),
            ..ViConfig::default()
        };
        let flow = FlowConfig {
            euler_steps: if inverse { 10 } else { 50 },
            train_steps: pick(100_000, 10_000),
            ..FlowConfig::default()
        };
        let dropout = DropoutConfig {
            train_steps: pick(200_000, 20_000),
            passes: pick(10_000, 1000),
            ..DropoutConfig::default()
        };
        let pinn = PinnConfig {
            train_steps: pick(200_000, 20_000),
            ..PinnConfig::default()
        };
        Ok(Self {
            experiment: experiment.into(),
            surrogate: SurrogateKind::Bnn,
            estimator: Estimator::Hmc,
            profile,
            noise: if experiment == "regression" { 0.1 } else { 0.01 },
            seed: 0,
            data_seed: 0,
            rng: RNG_ALGORITHM.into(),
            hidden_widths: vec![50, 50],
            kl: KlSettings::default(),
            hmc,
            vi,
            vi_init_rho: -3.0,
            warm_start_steps: 0,
            flow,
            dropout,
            pinn,
            posterior_draws: pick(10_000, 2000),
            prior_samples: 100_000,
            grid: GridSpec {
                points_1d: 201,
                points_2d: pick(101, 51),
            },
            sensors: None,
            noise_spec: None,
        })
    }

    /// Parses a JSON document; absent fields take the profile defaults.
    ///
    /// `experiment` is required. `data_seed` defaults to `seed`, and every
    /// sampler seed is set from `seed`.
    pub fn from_json(text: &str) -> Result<Self> {
        let user: Value = serde_json::from_str(text)?;
        let obj = user
            .as_object()
            .ok_or_else(|| Error::Config("experiment config must be a JSON object".into()))?;
        let experiment = obj
            .get("experiment")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Config(format!("missing \"experiment\"; available: {}", CATALOG.join(", "))))?;
        let profile: Profile = match obj.get("profile") {
            Some(p) => serde_json::from_value(p.clone())?,
            None => Profile::default(),
        };
        let mut merged = serde_json::to_value(Self::defaults(experiment, profile)?)?;
        merge(&mut merged, &user);
        let mut cfg: Self = serde_json::from_value(merged)?;
        if !obj.contains_key("data_seed") {
            cfg.data_seed = cfg.seed;
        }
        cfg.sync_seeds();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Propagates the top-level seed to every sampler.
    pub fn sync_seeds(&mut self) {
        self.hmc.seed = self.seed;
        self.vi.seed = self.seed;
        self.flow.seed = self.seed;
        self.dropout.seed = self.seed;
        self.pinn.seed = self.seed;
    }

    pub fn validate(&self) -> Result<()> {
        let problem = PdeProblem::catalog(&self.experiment)?;
        if self.rng != RNG_ALGORITHM {
            return Err(Error::Config(format!(
                "unsupported generator '{}', only '{RNG_ALGORITHM}' is available",
                self.rng
            )));
        }
        match (self.estimator, self.surrogate) {
            (Estimator::Dnf, SurrogateKind::Bnn) => {
                return Err(Error::Config("the flow estimator requires the kl surrogate".into()))
            }
            (Estimator::Dropout | Estimator::Gpr, SurrogateKind::Kl) => {
                return Err(Error::Config(format!("{:?} requires the bnn surrogate", self.estimator)))
            }
            _ => {}
        }
        if self.estimator == Estimator::Gpr && problem.operator.is_some() {
            return Err(Error::Config("gpr applies to plain regression data only".into()));
        }
        if self.surrogate == SurrogateKind::Kl && problem.spatial_dim() != 1 {
            return Err(Error::Config("the kl surrogate is one-dimensional".into()));
        }
        if !(self.noise > 0.0) {
            return Err(Error::Config(format!("noise level must be positive, got {}", self.noise)));
        }
        let grid_ok = match problem.spatial_dim() {
            1 => self.grid.points_1d >= 2,
            _ => self.grid.points_2d >= 2,
        };
        if !grid_ok {
            return Err(Error::Config("evaluation grid needs at least two points per axis".into()));
        }
        Ok(())
    }

    /// Short name for output directories.
    pub fn run_label(&self) -> String {
        let s = serde_json::to_value(self.surrogate).expect("enum serializes");
        let e = serde_json::to_value(self.estimator).expect("enum serializes");
        format!(
            "{}-{}-{}-noise{}-seed{}",
            self.experiment,
            s.as_str().unwrap_or_default(),
            e.as_str().unwrap_or_default(),
            self.noise,
            self.seed
        )
    }
}

/// Recursively overlays `over` onto `base`; objects merge, anything else
/// replaces.
fn merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}
