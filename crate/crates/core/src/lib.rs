//! Bayesian inference for PDE solutions and coefficients from noisy sensors.
//!
//! Surrogates (tanh networks, truncated KL expansions) are tied to a PDE
//! operator through a Gaussian likelihood; posteriors are explored with HMC,
//! mean-field VI or a potential normalizing flow, and compared against PINN,
//! MC-dropout and GP-regression baselines.

pub mod baselines;
pub mod bayes;
pub mod datagen;
pub mod error;
pub mod experiment;
pub mod kl;
pub mod mlp;
pub mod pde;
pub mod samplers;
pub mod surrogate;

pub use bayes::{
    Differentiable, LikelihoodTerms, LogPosteriorTarget, Mode, Observation, PosteriorSamples, SensorDataset,
};
pub use error::{Error, Result};
pub use experiment::{ExperimentConfig, RunSummary};
pub use mlp::{DerivOrder, Jet, JetBatch, MlpArchitecture};
pub use pde::{Field, PdeProblem};
pub use surrogate::Surrogate;
