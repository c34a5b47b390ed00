//! Non-Bayesian comparison methods: point-estimate training, MC dropout, and
//! Gaussian-process regression on the empirical prior kernel of a network.

pub mod gp;
pub mod pinn;
pub mod prior;

pub use gp::gp_regress;
pub use pinn::{dropout_predict, dropout_train, pinn_train, DropoutConfig, PinnConfig, TrainedModel};
pub use prior::{
    estimate_prior_kernel, excess_kurtosis, gaussian_kurtosis_se, sample_prior_derivatives, DerivativeSamples,
    PriorCase, PriorKernelEstimate,
};
