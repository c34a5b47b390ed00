//! Configuration-driven experiment runs and prior studies.

pub mod config;
pub mod run;
pub mod studies;

pub use config::{Estimator, ExperimentConfig, GridSpec, KlSettings, Profile, SurrogateKind};
pub use run::{build_target, evaluation_grid, relative_l2, run_experiment, RunSummary, SamplerSummary};
pub use studies::{
    compare_kernels, prior_covariance_study, prior_density_study, CovarianceStudy, CovarianceStudyConfig,
    DensityStudyConfig, KernelComparison, MarginalStats,
};
