//! Catalog of PDE operators, boundary traces and manufactured solutions.
//!
//! Every operator in scope has the form `lambda * Laplacian(u) + R(u; k)`,
//! where `R` is a pointwise reaction term. The boundary operator is the
//! Dirichlet trace `B(u) = u`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp::Jet;

/// Where a PDE coefficient comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Coefficient {
    Known(f64),
    /// Index into the unknown-parameter block.
    Unknown(usize),
}

impl Coefficient {
    fn resolve(self, unknowns: &[f64]) -> f64 {
        match self {
            Coefficient::Known(v) => v,
            Coefficient::Unknown(i) => unknowns[i],
        }
    }
}

/// Pointwise reaction term `R(u; k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Reaction {
    None,
    /// `k tanh(u)`
    Tanh(Coefficient),
    /// `u (u^2 - 1)`
    AllenCahn,
    /// `k u^2`
    Quadratic(Coefficient),
}

/// `f = lambda * Laplacian(u) + R(u; k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Operator {
    pub diffusion: f64,
    pub reaction: Reaction,
}

/// Partial derivatives of a residual with respect to its inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualPartials {
    pub d_value: f64,
    /// Same for every Hessian-diagonal entry.
    pub d_hess: f64,
    /// With respect to the unknown coefficient, if the reaction has one.
    pub d_unknown: Option<(usize, f64)>,
}

impl Operator {
    /// `f̃` from the value and Laplacian of `ũ`.
    pub fn apply(&self, value: f64, laplacian: f64, unknowns: &[f64]) -> f64 {
        self.diffusion * laplacian + self.reaction_term(value, unknowns)
    }

    fn reaction_term(&self, u: f64, unknowns: &[f64]) -> f64 {
        match self.reaction {
            Reaction::None => 0.0,
            Reaction::Tanh(k) => k.resolve(unknowns) * u.tanh(),
            Reaction::AllenCahn => u * (u * u - 1.0),
            Reaction::Quadratic(k) => k.resolve(unknowns) * u * u,
        }
    }

    pub fn partials(&self, u: f64, unknowns: &[f64]) -> ResidualPartials {
        let unknown = |c: Coefficient, dk: f64| match c {
            Coefficient::Unknown(i) => Some((i, dk)),
            Coefficient::Known(_) => None,
        };
        let (d_value, d_unknown) = match self.reaction {
            Reaction::None => (0.0, None),
            Reaction::Tanh(k) => {
                let t = u.tanh();
                (k.resolve(unknowns) * (1.0 - t * t), unknown(k, t))
            }
            Reaction::AllenCahn => (3.0 * u * u - 1.0, None),
            Reaction::Quadratic(k) => (2.0 * k.resolve(unknowns) * u, unknown(k, u * u)),
        };
        ResidualPartials {
            d_value,
            d_hess: self.diffusion,
            d_unknown,
        }
    }
}

/// Closed-form reference solutions with hand-derived jets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExactSolution {
    /// `sin^3(6x)`
    SinCubed,
    /// `sin(pi x) sin(pi y)`
    SinSin,
}

impl ExactSolution {
    pub fn jet(&self, x: &[f64]) -> Jet {
        match self {
            ExactSolution::SinCubed => {
                let (s, c) = (6.0 * x[0]).sin_cos();
                Jet {
                    value: s * s * s,
                    grad: vec![18.0 * s * s * c],
                    hess_diag: vec![216.0 * s * c * c - 108.0 * s * s * s],
                }
            }
            ExactSolution::SinSin => {
                let (sx, cx) = (PI * x[0]).sin_cos();
                let (sy, cy) = (PI * x[1]).sin_cos();
                let u = sx * sy;
                Jet {
                    value: u,
                    grad: vec![PI * cx * sy, PI * sx * cy],
                    hess_diag: vec![-PI * PI * u, -PI * PI * u],
                }
            }
        }
    }
}

/// A declared unknown PDE coefficient with its standard-normal prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnknownParam {
    pub name: String,
    pub true_value: f64,
    pub prior_mean: f64,
    pub prior_std: f64,
}

/// Which reference field to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    U,
    F,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeProblem {
    pub name: String,
    /// Axis-aligned box, one `(lo, hi)` pair per coordinate.
    pub domain: Vec<(f64, f64)>,
    /// `None` for plain function regression.
    pub operator: Option<Operator>,
    pub known_params: BTreeMap<String, f64>,
    pub unknown_params: Vec<UnknownParam>,
    pub exact: ExactSolution,
}

pub const CATALOG: [&str; 6] = [
    "regression",
    "poisson1d",
    "nonlinear_poisson1d",
    "allen_cahn2d",
    "inverse_reaction1d",
    "inverse_reaction2d",
];

const LAMBDA: f64 = 0.01;

impl PdeProblem {
    /// Looks up a catalog entry by name.
    pub fn catalog(name: &str) -> Result<Self> {
        let d1 = vec![(-0.7, 0.7)];
        let d2 = vec![(-1.0, 1.0), (-1.0, 1.0)];
        let known = |pairs: &[(&str, f64)]| {
            pairs
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect::<BTreeMap<_, _>>()
        };
        let unknown_k = |truth: f64| UnknownParam {
            name: "k".into(),
            true_value: truth,
            prior_mean: 0.0,
            prior_std: 1.0,
        };
        let op = |reaction| {
            Some(Operator {
                diffusion: LAMBDA,
                reaction,
            })
        };
        let problem = match name {
            "regression" => PdeProblem {
                name: name.into(),
                domain: vec![(-1.0, 1.0)],
                operator: None,
                known_params: BTreeMap::new(),
                unknown_params: vec![],
                exact: ExactSolution::SinCubed,
            },
            "poisson1d" => PdeProblem {
                name: name.into(),
                domain: d1,
                operator: op(Reaction::None),
                known_params: known(&[("lambda", LAMBDA)]),
                unknown_params: vec![],
                exact: ExactSolution::SinCubed,
            },
            "nonlinear_poisson1d" => PdeProblem {
                name: name.into(),
                domain: d1,
                operator: op(Reaction::Tanh(Coefficient::Known(0.7))),
                known_params: known(&[("lambda", LAMBDA), ("k", 0.7)]),
                unknown_params: vec![],
                exact: ExactSolution::SinCubed,
            },
            "allen_cahn2d" => PdeProblem {
                name: name.into(),
                domain: d2,
                operator: op(Reaction::AllenCahn),
                known_params: known(&[("lambda", LAMBDA)]),
                unknown_params: vec![],
                exact: ExactSolution::SinSin,
            },
            "inverse_reaction1d" => PdeProblem {
                name: name.into(),
                domain: d1,
                operator: op(Reaction::Tanh(Coefficient::Unknown(0))),
                known_params: known(&[("lambda", LAMBDA)]),
                unknown_params: vec![unknown_k(0.7)],
                exact: ExactSolution::SinCubed,
            },
            "inverse_reaction2d" => PdeProblem {
                name: name.into(),
                domain: d2,
                operator: op(Reaction::Quadratic(Coefficient::Unknown(0))),
                known_params: known(&[("lambda", LAMBDA)]),
                unknown_params: vec![unknown_k(1.0)],
                exact: ExactSolution::SinSin,
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown experiment '{other}'; available: {}",
                    CATALOG.join(", ")
                )))
            }
        };
        Ok(problem)
    }

    pub fn spatial_dim(&self) -> usize {
        self.domain.len()
    }

    pub fn n_unknowns(&self) -> usize {
        self.unknown_params.len()
    }

    pub fn true_unknowns(&self) -> Vec<f64> {
        self.unknown_params.iter().map(|p| p.true_value).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.domain.len()
            && x.iter()
                .zip(&self.domain)
                .all(|(&v, &(lo, hi))| v >= lo - 1e-12 && v <= hi + 1e-12)
    }

    pub fn on_boundary(&self, x: &[f64]) -> bool {
        self.contains(x)
            && x.iter()
                .zip(&self.domain)
                .any(|(&v, &(lo, hi))| (v - lo).abs() < 1e-12 || (v - hi).abs() < 1e-12)
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if !self.contains(x) {
            return Err(Error::Domain {
                context: "problem domain",
                point: x.to_vec(),
            });
        }
        Ok(())
    }

    /// Resolves a named parameter map into the unknown-parameter block.
    pub fn unknowns_from(&self, params: &BTreeMap<String, f64>) -> Result<Vec<f64>> {
        self.unknown_params
            .iter()
            .map(|p| {
                params
                    .get(&p.name)
                    .copied()
                    .ok_or_else(|| Error::Config(format!("missing PDE parameter '{}'", p.name)))
            })
            .collect()
    }

    /// `f̃ = N_x(ũ; lambda)` at a point, given the jet of `ũ` there.
    pub fn residual(&self, jet: &Jet, params: &BTreeMap<String, f64>) -> Result<f64> {
        let op = self
            .operator
            .ok_or_else(|| Error::Config(format!("problem '{}' has no differential operator", self.name)))?;
        if jet.hess_diag.len() != self.spatial_dim() {
            return Err(Error::Dimension {
                context: "jet",
                expected: self.spatial_dim(),
                actual: jet.hess_diag.len(),
            });
        }
        let unknowns = self.unknowns_from(params)?;
        Ok(op.apply(jet.value, jet.laplacian(), &unknowns))
    }

    /// Dirichlet trace.
    pub fn boundary(&self, jet: &Jet) -> f64 {
        jet.value
    }

    /// Closed-form reference value of `u` or `f`.
    pub fn exact_eval(&self, which: Field, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        Ok(match which {
            Field::U => self.exact.jet(x).value,
            Field::F => self.exact_f(x)?,
        })
    }

    /// Forcing term written out per problem rather than through the operator.
    fn exact_f(&self, x: &[f64]) -> Result<f64> {
        let k = |name: &str| -> f64 {
            self.known_params
                .get(name)
                .copied()
                .or_else(|| {
                    self.unknown_params
                        .iter()
                        .find(|p| p.name == name)
                        .map(|p| p.true_value)
                })
                .unwrap_or(0.0)
        };
        let lambda = LAMBDA;
        Ok(match self.name.as_str() {
            "regression" => {
                return Err(Error::Config("regression has no forcing term".into()));
            }
            "poisson1d" | "nonlinear_poisson1d" | "inverse_reaction1d" => {
                let (s, c) = (6.0 * x[0]).sin_cos();
                let upp = 216.0 * s * c * c - 108.0 * s.powi(3);
                let reaction = if self.name == "poisson1d" {
                    0.0
                } else {
                    k("k") * s.powi(3).tanh()
                };
                lambda * upp + reaction
            }
            "allen_cahn2d" => {
                let u = (PI * x[0]).sin() * (PI * x[1]).sin();
                -2.0 * lambda * PI * PI * u + u * (u * u - 1.0)
            }
            "inverse_reaction2d" => {
                let u = (PI * x[0]).sin() * (PI * x[1]).sin();
                -2.0 * lambda * PI * PI * u + k("k") * u * u
            }
            other => return Err(Error::Config(format!("no forcing term for '{other}'"))),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn truth(p: &PdeProblem) -> BTreeMap<String, f64> {
        p.unknown_params
            .iter()
            .map(|u| (u.name.clone(), u.true_value))
            .collect()
    }

    #[test]
    fn linear_poisson_at_peak() {
        let p = PdeProblem::catalog("poisson1d").unwrap();
        let x = [PI / 12.0];
        let jet = p.exact.jet(&x);
        assert!((jet.hess_diag[0] + 108.0).abs() < 1e-10);
        let f = p.residual(&jet, &BTreeMap::new()).unwrap();
        assert!((f + 1.08).abs() < 1e-12);
    }

    #[test]
    fn nonlinear_poisson_at_peak() {
        let p = PdeProblem::catalog("nonlinear_poisson1d").unwrap();
        let x = [PI / 12.0];
        let f = p.residual(&p.exact.jet(&x), &BTreeMap::new()).unwrap();
        assert!((f - (-1.08 + 0.7 * 1f64.tanh())).abs() < 1e-12);
        assert!((f + 0.54689).abs() < 1e-5);
        assert!((p.exact_eval(Field::F, &x).unwrap() + 0.54689).abs() < 1e-5);
    }

    #[test]
    fn allen_cahn_at_centre() {
        let p = PdeProblem::catalog("allen_cahn2d").unwrap();
        let x = [0.5, 0.5];
        assert!((p.exact_eval(Field::U, &x).unwrap() - 1.0).abs() < 1e-15);
        let f = p.residual(&p.exact.jet(&x), &BTreeMap::new()).unwrap();
        assert!((f + 0.02 * PI * PI).abs() < 1e-12);
        assert!((f + 0.197392).abs() < 1e-6);
    }

    #[test]
    fn regression_u_at_origin() {
        let p = PdeProblem::catalog("regression").unwrap();
        assert_eq!(p.exact_eval(Field::U, &[0.0]).unwrap(), 0.0);
        assert!(p.exact_eval(Field::F, &[0.0]).is_err());
    }

    #[test]
    fn domain_and_parameter_errors() {
        let p = PdeProblem::catalog("inverse_reaction1d").unwrap();
        assert!(matches!(p.exact_eval(Field::U, &[0.9]), Err(Error::Domain { .. })));
        let jet = p.exact.jet(&[0.1]);
        assert!(matches!(p.residual(&jet, &BTreeMap::new()), Err(Error::Config(_))));
        assert!(PdeProblem::catalog("heat3d").is_err());
    }

    #[test]
    fn every_unknown_has_one_prior() {
        for name in CATALOG {
            let p = PdeProblem::catalog(name).unwrap();
            let mut names: Vec<_> = p.unknown_params.iter().map(|u| &u.name).collect();
            names.dedup();
            assert_eq!(names.len(), p.unknown_params.len());
            assert!(p.unknown_params.iter().all(|u| u.prior_std > 0.0));
        }
    }

    #[test]
    fn manufactured_solutions_are_consistent() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for name in CATALOG.iter().filter(|n| **n != "regression") {
            let p = PdeProblem::catalog(name).unwrap();
            let params = truth(&p);
            for _ in 0..100 {
                let x: Vec<f64> = p
                    .domain
                    .iter()
                    .map(|&(lo, hi)| lo + (hi - lo) * rng.random::<f64>())
                    .collect();
                let f = p.residual(&p.exact.jet(&x), &params).unwrap();
                let reference = p.exact_eval(Field::F, &x).unwrap();
                assert!((f - reference).abs() < 1e-10, "{name} at {x:?}");
            }
        }
    }

    #[test]
    fn exact_jets_match_finite_differences() {
        let h = 1e-5;
        for (sol, x) in [
            (ExactSolution::SinCubed, vec![0.31]),
            (ExactSolution::SinSin, vec![0.2, -0.45]),
        ] {
            let jet = sol.jet(&x);
            for i in 0..x.len() {
                let mut up = x.clone();
                let mut dn = x.clone();
                up[i] += h;
                dn[i] -= h;
                let (fu, fd) = (sol.jet(&up).value, sol.jet(&dn).value);
                assert!(((fu - fd) / (2.0 * h) - jet.grad[i]).abs() < 1e-6);
                assert!(((fu - 2.0 * jet.value + fd) / (h * h) - jet.hess_diag[i]).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn only_linear_poisson_superposes() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let jet = |rng: &mut ChaCha20Rng, d: usize| Jet {
            value: rng.random::<f64>() * 2.0 - 1.0,
            grad: (0..d).map(|_| rng.random::<f64>()).collect(),
            hess_diag: (0..d).map(|_| rng.random::<f64>() * 10.0).collect(),
        };
        let add = |a: &Jet, b: &Jet| Jet {
            value: a.value + b.value,
            grad: a.grad.iter().zip(&b.grad).map(|(x, y)| x + y).collect(),
            hess_diag: a.hess_diag.iter().zip(&b.hess_diag).map(|(x, y)| x + y).collect(),
        };
        for name in CATALOG.iter().filter(|n| **n != "regression") {
            let p = PdeProblem::catalog(name).unwrap();
            let params = truth(&p);
            let d = p.spatial_dim();
            let (a, b) = (jet(&mut rng, d), jet(&mut rng, d));
            let lhs = p.residual(&add(&a, &b), &params).unwrap();
            let rhs = p.residual(&a, &params).unwrap() + p.residual(&b, &params).unwrap();
            if *name == "poisson1d" {
                assert!((lhs - rhs).abs() < 1e-12);
            } else {
                assert!((lhs - rhs).abs() > 1e-6, "{name} unexpectedly linear");
            }
        }
    }

    #[test]
    fn partials_match_finite_differences() {
        let p = PdeProblem::catalog("inverse_reaction2d").unwrap();
        let op = p.operator.unwrap();
        let (u, lap, k) = (0.37, -1.3, 0.9);
        let part = op.partials(u, &[k]);
        let h = 1e-6;
        let du = (op.apply(u + h, lap, &[k]) - op.apply(u - h, lap, &[k])) / (2.0 * h);
        let dk = (op.apply(u, lap, &[k + h]) - op.apply(u, lap, &[k - h])) / (2.0 * h);
        assert!((du - part.d_value).abs() < 1e-8);
        assert!((dk - part.d_unknown.unwrap().1).abs() < 1e-8);
        assert_eq!(part.d_hess, 0.01);
    }
}
