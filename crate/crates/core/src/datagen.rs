//! Seeded synthesis of sensor datasets.
//!
//! Placement draws come from ChaCha20 stream 0 and noise draws from stream 1
//! of the same seed, so changing a noise level never moves a sensor.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bayes::{Observation, SensorDataset};
use crate::error::{Error, Result};
use crate::pde::{Field, PdeProblem};

/// Name of the generator behind every random placement and noise draw.
pub const RNG_ALGORITHM: &str = "chacha20";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SensorLayout {
    /// `count` points from `lo` to `hi` inclusive.
    Equidistant1d { lo: f64, hi: f64, count: usize },
    /// Uniform draws strictly inside the domain.
    UniformRandomInterior { count: usize },
    /// `per_edge` equally spaced points (corners included) on every edge of
    /// a 2D box; the two endpoints of a 1D interval.
    BoundaryGrid { per_edge: usize },
    ExplicitList { points: Vec<Vec<f64>> },
    /// Reuse the locations of the `u` set (only valid for `f`).
    SameAsU,
}

/// Layouts for each observation set; a set may combine several layouts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SensorPlan {
    pub u: Vec<SensorLayout>,
    pub f: Vec<SensorLayout>,
    pub b: Vec<SensorLayout>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma_u: f64,
    pub sigma_f: f64,
    pub sigma_b: f64,
}

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| {
        if n == 1 {
            0.5 * (lo + hi)
        } else if i == n - 1 {
            hi
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        }
    })
}

fn place<R: Rng>(
    problem: &PdeProblem,
    layout: &SensorLayout,
    u_points: &[Vec<f64>],
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let d = problem.spatial_dim();
    let mismatch = |what: &str| Err(Error::Config(format!("{what} does not fit problem '{}'", problem.name)));
    let points: Vec<Vec<f64>> = match layout {
        SensorLayout::Equidistant1d { lo, hi, count } => {
            if d != 1 || *count == 0 || lo > hi {
                return mismatch("equidistant-1d layout");
            }
            linspace(*lo, *hi, *count).map(|x| vec![x]).collect()
        }
        SensorLayout::UniformRandomInterior { count } => {
            if *count == 0 {
                return mismatch("empty random layout");
            }
            (0..*count)
                .map(|_| {
                    problem
                        .domain
                        .iter()
                        .map(|&(lo, hi)| loop {
                            let t: f64 = rng.random();
                            if t > 0.0 {
                                break lo + (hi - lo) * t;
                            }
                        })
                        .collect()
                })
                .collect()
        }
        SensorLayout::BoundaryGrid { per_edge } => {
            if *per_edge == 0 {
                return mismatch("empty boundary layout");
            }
            match problem.domain.as_slice() {
                [(lo, hi)] => vec![vec![*lo], vec![*hi]],
                [(xl, xh), (yl, yh)] => {
                    let mut pts = Vec::with_capacity(4 * per_edge);
                    for y in [*yl, *yh] {
                        pts.extend(linspace(*xl, *xh, *per_edge).map(|x| vec![x, y]));
                    }
                    for x in [*xl, *xh] {
                        pts.extend(linspace(*yl, *yh, *per_edge).map(|y| vec![x, y]));
                    }
                    pts
                }
                _ => return mismatch("boundary grid"),
            }
        }
        SensorLayout::ExplicitList { points } => points.clone(),
        SensorLayout::SameAsU => u_points.to_vec(),
    };
    for p in &points {
        if !problem.contains(p) {
            return Err(Error::Config(format!(
                "sensor at {p:?} lies outside the domain of '{}'",
                problem.name
            )));
        }
    }
    Ok(points)
}

/// Places sensors and draws noisy observations of the exact solution.
pub fn generate_sensors(problem: &PdeProblem, plan: &SensorPlan, noise: &NoiseSpec, seed: u64) -> Result<SensorDataset> {
    for s in [noise.sigma_u, noise.sigma_f, noise.sigma_b] {
        if !(s >= 0.0) || !s.is_finite() {
            return Err(Error::Config(format!("noise std {s} must be finite and non-negative")));
        }
    }
    if plan.u.iter().chain(&plan.b).any(|l| *l == SensorLayout::SameAsU) {
        return Err(Error::Config("same-as-u layout is only valid for f-sensors".into()));
    }
    if !plan.f.is_empty() && problem.operator.is_none() {
        return Err(Error::Config(format!("'{}' has no forcing term to sense", problem.name)));
    }
    let mut placement = ChaCha20Rng::seed_from_u64(seed);
    placement.set_stream(0);
    let mut noise_rng = ChaCha20Rng::seed_from_u64(seed);
    noise_rng.set_stream(1);

    let mut place_all = |layouts: &[SensorLayout], u_points: &[Vec<f64>]| -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::new();
        for l in layouts {
            out.extend(place(problem, l, u_points, &mut placement)?);
        }
        Ok(out)
    };
    let u_pts = place_all(&plan.u, &[])?;
    let f_pts = place_all(&plan.f, &u_pts)?;
    let b_pts = place_all(&plan.b, &[])?;
    for p in &b_pts {
        if !problem.on_boundary(p) {
            return Err(Error::Config(format!("boundary sensor at {p:?} is not on the boundary")));
        }
    }

    let mut observe = |pts: Vec<Vec<f64>>, field: Field, sigma: f64| -> Result<Vec<Observation>> {
        pts.into_iter()
            .map(|x| {
                let exact = problem.exact_eval(field, &x)?;
                let z: f64 = noise_rng.sample(StandardNormal);
                Ok(Observation {
                    value: if sigma == 0.0 { exact } else { exact + sigma * z },
                    x,
                    sigma,
                })
            })
            .collect()
    };
    Ok(SensorDataset {
        u: observe(u_pts, Field::U, noise.sigma_u)?,
        f: observe(f_pts, Field::F, noise.sigma_f)?,
        b: observe(b_pts, Field::U, noise.sigma_b)?,
    })
}

/// Sensor layout used for each catalog experiment.
pub fn catalog_plan(name: &str) -> Result<SensorPlan> {
    let eq = |lo, hi, count| SensorLayout::Equidistant1d { lo, hi, count };
    let ends = SensorLayout::BoundaryGrid { per_edge: 1 };
    let edges = SensorLayout::BoundaryGrid { per_edge: 25 };
    Ok(match name {
        "regression" => SensorPlan {
            u: vec![eq(-0.8, -0.2, 16), eq(0.2, 0.8, 16)],
            ..Default::default()
        },
        "poisson1d" => SensorPlan {
            f: vec![eq(-0.7, 0.7, 16)],
            b: vec![ends],
            ..Default::default()
        },
        "nonlinear_poisson1d" => SensorPlan {
            f: vec![eq(-0.7, 0.7, 32)],
            b: vec![ends],
            ..Default::default()
        },
        "allen_cahn2d" => SensorPlan {
            f: vec![SensorLayout::UniformRandomInterior { count: 500 }],
            b: vec![edges],
            ..Default::default()
        },
        "inverse_reaction1d" => {
            // Interior nodes of an 8-point equipartition of [-0.7, 0.7].
            let interior = linspace(-0.7, 0.7, 8).skip(1).take(6).map(|x| vec![x]).collect();
            SensorPlan {
                u: vec![SensorLayout::ExplicitList { points: interior }],
                f: vec![eq(-0.7, 0.7, 32)],
                b: vec![ends],
            }
        }
        "inverse_reaction2d" => SensorPlan {
            u: vec![SensorLayout::UniformRandomInterior { count: 100 }],
            f: vec![SensorLayout::SameAsU],
            b: vec![edges],
        },
        other => return Err(Error::Config(format!("no sensor plan for '{other}'"))),
    })
}

/// Noise stds for a catalog experiment at noise level `level` (0.01 or 0.1).
///
/// Inverse problems keep boundary noise at 0.01 in both cases; regression
/// observes `u` only.
pub fn catalog_noise(name: &str, level: f64) -> Result<NoiseSpec> {
    Ok(match name {
        "regression" => NoiseSpec {
            sigma_u: level,
            sigma_f: 0.0,
            sigma_b: 0.0,
        },
        "poisson1d" | "nonlinear_poisson1d" | "allen_cahn2d" => NoiseSpec {
            sigma_u: level,
            sigma_f: level,
            sigma_b: level,
        },
        "inverse_reaction1d" | "inverse_reaction2d" => NoiseSpec {
            sigma_u: level,
            sigma_f: level,
            sigma_b: 0.01,
        },
        other => return Err(Error::Config(format!("no noise cases for '{other}'"))),
    })
}

/// CSV with columns `set,x[,y],value,sigma`.
pub fn dataset_to_csv(data: &SensorDataset, spatial_dim: usize) -> String {
    let mut out = String::from(if spatial_dim == 2 { "set,x,y,value,sigma\n" } else { "set,x,value,sigma\n" });
    for (name, obs) in [("u", &data.u), ("f", &data.f), ("b", &data.b)] {
        for o in obs {
            let _ = write!(out, "{name}");
            for c in &o.x {
                let _ = write!(out, ",{c}");
            }
            let _ = writeln!(out, ",{},{}", o.value, o.sigma);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::CATALOG;

    #[test]
    fn equidistant_sixteen() {
        let p = PdeProblem::catalog("poisson1d").unwrap();
        let plan = catalog_plan("poisson1d").unwrap();
        let noise = catalog_noise("poisson1d", 0.01).unwrap();
        let d = generate_sensors(&p, &plan, &noise, 1).unwrap();
        assert_eq!(d.n_f(), 16);
        assert_eq!(d.f[0].x[0], -0.7);
        assert_eq!(d.f[15].x[0], 0.7);
        assert!((d.f[1].x[0] - d.f[0].x[0] - 1.4 / 15.0).abs() < 1e-12);
        assert_eq!(d.n_b(), 2);
    }

    #[test]
    fn zero_noise_reproduces_exact_values() {
        let p = PdeProblem::catalog("inverse_reaction2d").unwrap();
        let plan = catalog_plan("inverse_reaction2d").unwrap();
        let zero = NoiseSpec {
            sigma_u: 0.0,
            sigma_f: 0.0,
            sigma_b: 0.0,
        };
        let d = generate_sensors(&p, &plan, &zero, 7).unwrap();
        for o in &d.u {
            assert_eq!(o.value, p.exact_eval(Field::U, &o.x).unwrap());
        }
        for o in &d.f {
            assert_eq!(o.value, p.exact_eval(Field::F, &o.x).unwrap());
        }
        assert_eq!(d.u.iter().map(|o| &o.x).collect::<Vec<_>>(), d.f.iter().map(|o| &o.x).collect::<Vec<_>>());
    }

    #[test]
    fn identical_inputs_give_identical_csv() {
        for name in CATALOG {
            let p = PdeProblem::catalog(name).unwrap();
            let plan = catalog_plan(name).unwrap();
            let noise = catalog_noise(name, 0.1).unwrap();
            let a = generate_sensors(&p, &plan, &noise, 42).unwrap();
            let b = generate_sensors(&p, &plan, &noise, 42).unwrap();
            assert_eq!(dataset_to_csv(&a, p.spatial_dim()), dataset_to_csv(&b, p.spatial_dim()));
        }
    }

    #[test]
    fn catalog_counts() {
        let count = |name: &str| {
            let p = PdeProblem::catalog(name).unwrap();
            let d = generate_sensors(&p, &catalog_plan(name).unwrap(), &catalog_noise(name, 0.01).unwrap(), 0).unwrap();
            (d.n_u(), d.n_f(), d.n_b())
        };
        assert_eq!(count("regression"), (32, 0, 0));
        assert_eq!(count("nonlinear_poisson1d"), (0, 32, 2));
        assert_eq!(count("allen_cahn2d"), (0, 500, 100));
        assert_eq!(count("inverse_reaction1d"), (6, 32, 2));
        assert_eq!(count("inverse_reaction2d"), (100, 100, 100));
    }

    #[test]
    fn interior_u_sensors_for_inverse_1d() {
        let plan = catalog_plan("inverse_reaction1d").unwrap();
        let SensorLayout::ExplicitList { points } = &plan.u[0] else {
            panic!("explicit list expected")
        };
        let h = 1.4 / 7.0;
        for (i, p) in points.iter().enumerate() {
            assert!((p[0] - (-0.7 + h * (i + 1) as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn random_points_strictly_inside_and_boundary_on_edges() {
        let p = PdeProblem::catalog("allen_cahn2d").unwrap();
        let d = generate_sensors(&p, &catalog_plan("allen_cahn2d").unwrap(), &catalog_noise("allen_cahn2d", 0.1).unwrap(), 3)
            .unwrap();
        for o in &d.f {
            assert!(o.x.iter().all(|&c| c > -1.0 && c < 1.0));
        }
        for o in &d.b {
            assert!(o.x.iter().any(|&c| c.abs() == 1.0));
        }
    }

    #[test]
    fn noise_has_declared_scale() {
        let p = PdeProblem::catalog("regression").unwrap();
        let sigma = 0.1;
        let plan = SensorPlan {
            u: vec![SensorLayout::UniformRandomInterior { count: 20_000 }],
            ..Default::default()
        };
        let noise = NoiseSpec {
            sigma_u: sigma,
            sigma_f: 0.0,
            sigma_b: 0.0,
        };
        let d = generate_sensors(&p, &plan, &noise, 8).unwrap();
        let r: Vec<f64> = d.u.iter().map(|o| o.value - p.exact_eval(Field::U, &o.x).unwrap()).collect();
        let n = r.len() as f64;
        let mean = r.iter().sum::<f64>() / n;
        let sd = (r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 3.0 * sigma / n.sqrt());
        assert!((sd / sigma - 1.0).abs() < 0.05);
    }

    #[test]
    fn mismatched_layouts_are_config_errors() {
        let p2 = PdeProblem::catalog("allen_cahn2d").unwrap();
        let p1 = PdeProblem::catalog("poisson1d").unwrap();
        let z = catalog_noise("poisson1d", 0.01).unwrap();
        let eq = SensorPlan {
            f: vec![SensorLayout::Equidistant1d { lo: -1.0, hi: 1.0, count: 4 }],
            ..Default::default()
        };
        assert!(matches!(generate_sensors(&p2, &eq, &z, 0), Err(Error::Config(_))));
        assert!(matches!(generate_sensors(&p1, &eq, &z, 0), Err(Error::Config(_))));
    }

    #[test]
    fn csv_header_and_rows() {
        let p = PdeProblem::catalog("poisson1d").unwrap();
        let d = generate_sensors(&p, &catalog_plan("poisson1d").unwrap(), &catalog_noise("poisson1d", 0.1).unwrap(), 0).unwrap();
        let csv = dataset_to_csv(&d, 1);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "set,x,value,sigma");
        assert_eq!(lines.len(), 1 + 18);
        assert!(lines[1].starts_with("f,-0.7,"));
    }
}
