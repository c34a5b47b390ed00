//! The two surrogate families behind one interface: tanh networks and the
//! truncated KL expansion.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kl::{KlBasis, KlTable};
use crate::mlp::{DerivOrder, JetBatch, MlpArchitecture, MlpTape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Surrogate {
    Mlp(MlpArchitecture),
    Kl(KlBasis),
}

impl Surrogate {
    /// Length of the surrogate's own parameter block.
    pub fn n_params(&self) -> usize {
        match self {
            Surrogate::Mlp(a) => a.n_params(),
            Surrogate::Kl(b) => b.n_terms(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Surrogate::Mlp(a) => a.input_dim(),
            Surrogate::Kl(_) => 1,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Surrogate::Mlp(_) => "bnn",
            Surrogate::Kl(_) => "kl",
        }
    }

    /// Standard-normal draw of the surrogate block.
    pub fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.n_params()).map(|_| rng.sample(StandardNormal)).collect()
    }

    /// Fixes a set of evaluation points for repeated evaluation.
    pub fn prepare(&self, points: &[f64]) -> Result<PreparedPoints> {
        let d = self.input_dim();
        if points.len() % d != 0 {
            return Err(Error::Dimension {
                context: "evaluation points",
                expected: d,
                actual: points.len() % d,
            });
        }
        let table = match self {
            Surrogate::Kl(b) => Some(b.tabulate(points)?),
            Surrogate::Mlp(_) => None,
        };
        Ok(PreparedPoints {
            points: points.to_vec(),
            n_points: points.len() / d,
            table,
        })
    }

    /// Jets at a batch of points.
    pub fn jets(&self, theta: &[f64], points: &[f64], order: DerivOrder) -> Result<JetBatch> {
        self.prepare(points)?.eval(self, theta, order, None, None, |_| None)
    }
}

/// Evaluation points bound to a surrogate, with KL basis values cached.
#[derive(Debug, Clone)]
pub struct PreparedPoints {
    points: Vec<f64>,
    n_points: usize,
    table: Option<KlTable>,
}

impl PreparedPoints {
    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Evaluates jets, then (if `adjoint_of` returns an adjoint and `grad` is
    /// given) accumulates the parameter gradient of the implied scalar.
    pub fn eval(
        &self,
        surrogate: &Surrogate,
        theta: &[f64],
        order: DerivOrder,
        mask: Option<&[f64]>,
        grad: Option<&mut [f64]>,
        adjoint_of: impl FnOnce(&JetBatch) -> Option<JetBatch>,
    ) -> Result<JetBatch> {
        if theta.len() < surrogate.n_params() {
            return Err(Error::Dimension {
                context: "surrogate parameters",
                expected: surrogate.n_params(),
                actual: theta.len(),
            });
        }
        match surrogate {
            Surrogate::Mlp(arch) => {
                let tape = MlpTape::record(arch, theta, &self.points, arch.input_dim(), order, mask)?;
                if let (Some(g), Some(adj)) = (grad, adjoint_of(tape.output())) {
                    tape.backward(&adj, g, None);
                }
                Ok(tape.into_output())
            }
            Surrogate::Kl(_) => {
                if mask.is_some() {
                    return Err(Error::Config("dropout requires a network surrogate".into()));
                }
                let table = self.table.as_ref().expect("KL points are tabulated");
                let out = table.eval(theta, order);
                if let (Some(g), Some(adj)) = (grad, adjoint_of(&out)) {
                    table.backward(&adj, g);
                }
                Ok(out)
            }
        }
    }
}
