//! Posterior estimators: HMC, mean-field VI and the potential flow, plus the
//! Adam optimizer they share with the baselines.

pub mod adam;
pub mod flow;
pub mod hmc;
pub mod vi;

pub use adam::{AdamConfig, AdamState};
pub use flow::{flow_fit, flow_forward, flow_sample, FlowConfig, FlowFit, Potential, PotentialNet};
pub use hmc::{hmc_sample, leapfrog, HmcConfig, HmcDiagnostics, HmcOutput, StepSizeAdapter};
pub use vi::{vi_fit, vi_sample, ViConfig, ViFit, ViGradient, ViParams};
