//! Prior studies: marginal densities of a prior network and its derivatives,
//! and output covariance kernels across architectures.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{
    estimate_prior_kernel, excess_kurtosis, gaussian_kurtosis_se, sample_prior_derivatives, PriorCase,
    PriorKernelEstimate,
};
use crate::error::{Error, Result};
use crate::mlp::{MlpArchitecture, PriorScales};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensityStudyConfig {
    pub hidden_widths: Vec<usize>,
    /// Standard normal everywhere when absent.
    pub scales: Option<PriorScales>,
    pub points: Vec<f64>,
    pub n_samples: usize,
    pub bins: usize,
    /// Histogram range in sample standard deviations either side of zero.
    pub range_stds: f64,
    pub seed: u64,
}

impl Default for DensityStudyConfig {
    fn default() -> Self {
        Self {
            hidden_widths: vec![50, 50],
            scales: None,
            points: vec![0.0, 0.5, 1.0],
            n_samples: 100_000,
            bins: 80,
            range_stds: 4.0,
            seed: 0,
        }
    }
}

/// Marginal statistics of one quantity at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalStats {
    /// `u`, `du` or `d2u`.
    pub quantity: String,
    pub x: f64,
    pub mean: f64,
    pub std: f64,
    pub excess_kurtosis: f64,
    pub kurtosis_se: f64,
    /// `|excess kurtosis| <= 3 * kurtosis_se`.
    pub gaussian_band: bool,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, v.sqrt())
}

/// Histogram CSV (`bin_lo,bin_hi,center,density,gaussian`) with the
/// zero-mean Gaussian of matching std for overlay.
pub fn histogram_csv(xs: &[f64], bins: usize, range_stds: f64) -> String {
    let (_, std) = mean_std(xs);
    let half = range_stds * std;
    let width = 2.0 * half / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in xs {
        let b = ((x + half) / width).floor();
        if b >= 0.0 && (b as usize) < bins {
            counts[b as usize] += 1;
        }
    }
    let n = xs.len() as f64;
    let mut s = String::from("bin_lo,bin_hi,center,density,gaussian\n");
    for (b, &c) in counts.iter().enumerate() {
        let lo = -half + b as f64 * width;
        let hi = lo + width;
        let mid = 0.5 * (lo + hi);
        let g = (-0.5 * (mid / std).powi(2)).exp() / (std * (2.0 * std::f64::consts::PI).sqrt());
        let _ = writeln!(s, "{lo:?},{hi:?},{mid:?},{:?},{g:?}", c as f64 / (n * width));
    }
    s
}

/// Samples a prior network at each point and writes one histogram CSV per
/// quantity and point plus `density_summary.json`.
pub fn prior_density_study(cfg: &DensityStudyConfig, out_dir: Option<&Path>) -> Result<Vec<MarginalStats>> {
    if cfg.n_samples < 1000 {
        return Err(Error::Config("the density study needs at least 1000 samples".into()));
    }
    if cfg.bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    let arch = MlpArchitecture::new(1, cfg.hidden_widths.clone())?;
    let scales = cfg.scales.clone().unwrap_or_else(|| PriorScales::standard(&arch));
    let draws = sample_prior_derivatives(&arch, &scales, &cfg.points, cfg.n_samples, cfg.seed)?;
    let se = gaussian_kurtosis_se(cfg.n_samples);
    let mut stats = Vec::new();
    for (p, &x) in cfg.points.iter().enumerate() {
        for (name, xs) in [("u", &draws.value[p]), ("du", &draws.first[p]), ("d2u", &draws.second[p])] {
            let (mean, std) = mean_std(xs);
            let k = excess_kurtosis(xs);
            stats.push(MarginalStats {
                quantity: name.into(),
                x,
                mean,
                std,
                excess_kurtosis: k,
                kurtosis_se: se,
                gaussian_band: k.abs() <= 3.0 * se,
            });
            if let Some(dir) = out_dir {
                fs::create_dir_all(dir)?;
                fs::write(dir.join(format!("density_{name}_x{x}.csv")), histogram_csv(xs, cfg.bins, cfg.range_stds))?;
            }
        }
    }
    if let Some(dir) = out_dir {
        fs::write(dir.join("density_summary.json"), serde_json::to_string_pretty(&stats)? + "\n")?;
    }
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CovarianceStudyConfig {
    pub cases: Vec<PriorCase>,
    /// Uniform grid on `[lo, hi]`.
    pub lo: f64,
    pub hi: f64,
    pub grid_points: usize,
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for CovarianceStudyConfig {
    fn default() -> Self {
        Self {
            cases: PriorCase::reference_cases(),
            lo: -1.0,
            hi: 1.0,
            grid_points: 21,
            n_samples: 100_000,
            seed: 0,
        }
    }
}

/// Entrywise comparison of two kernel estimates in units of their combined
/// standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelComparison {
    pub a: String,
    pub b: String,
    pub max_abs_diff: f64,
    /// Largest `|k_a - k_b| / sqrt(se_a^2 + se_b^2)`.
    pub max_z: f64,
    /// Fraction of entries with `z <= 3`.
    pub within_3se: f64,
    /// Same fraction over off-diagonal entries only.
    pub offdiag_within_3se: f64,
}

pub fn compare_kernels(a: &PriorKernelEstimate, b: &PriorKernelEstimate, la: &str, lb: &str) -> KernelComparison {
    let n = a.n_points;
    let (mut max_d, mut max_z) = (0.0f64, 0.0f64);
    let (mut ok, mut off_ok, mut off_n) = (0usize, 0usize, 0usize);
    for i in 0..n {
        for j in 0..n {
            let d = (a.get(i, j) - b.get(i, j)).abs();
            let z = d / (a.se(i, j).powi(2) + b.se(i, j).powi(2)).sqrt();
            max_d = max_d.max(d);
            max_z = max_z.max(z);
            ok += usize::from(z <= 3.0);
            if i != j {
                off_n += 1;
                off_ok += usize::from(z <= 3.0);
            }
        }
    }
    KernelComparison {
        a: la.into(),
        b: lb.into(),
        max_abs_diff: max_d,
        max_z,
        within_3se: ok as f64 / (n * n) as f64,
        offdiag_within_3se: off_ok as f64 / off_n.max(1) as f64,
    }
}

#[derive(Debug, Clone)]
pub struct CovarianceStudy {
    pub estimates: Vec<(String, PriorKernelEstimate)>,
    /// Every pair of cases, in case order.
    pub comparisons: Vec<KernelComparison>,
}

/// Estimates the kernel for every case and writes `cov_<label>.csv`,
/// `cov_se_<label>.csv` and `cov_summary.json`.
pub fn prior_covariance_study(cfg: &CovarianceStudyConfig, out_dir: Option<&Path>) -> Result<CovarianceStudy> {
    if cfg.cases.is_empty() {
        return Err(Error::Config("the covariance study needs at least one case".into()));
    }
    if cfg.grid_points < 2 {
        return Err(Error::Config("the covariance grid needs at least two points".into()));
    }
    let n = cfg.grid_points;
    let grid: Vec<f64> = (0..n)
        .map(|i| if i + 1 == n { cfg.hi } else { cfg.lo + (cfg.hi - cfg.lo) * i as f64 / (n - 1) as f64 })
        .collect();
    let mut estimates = Vec::new();
    for case in &cfg.cases {
        let est = estimate_prior_kernel(&case.arch()?, &case.scales, &grid, cfg.n_samples, cfg.seed)?;
        if let Some(dir) = out_dir {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(format!("cov_{}.csv", case.label)), est.to_csv())?;
            let se = PriorKernelEstimate {
                cov: est.std_err.clone(),
                ..est.clone()
            };
            fs::write(dir.join(format!("cov_se_{}.csv", case.label)), se.to_csv())?;
        }
        estimates.push((case.label.clone(), est));
    }
    let mut comparisons = Vec::new();
    for i in 0..estimates.len() {
        for j in i + 1..estimates.len() {
            let (la, a) = &estimates[i];
            let (lb, b) = &estimates[j];
            comparisons.push(compare_kernels(a, b, la, lb));
        }
    }
    if let Some(dir) = out_dir {
        let doc = serde_json::json!({ "grid": grid, "n_samples": cfg.n_samples, "comparisons": comparisons });
        fs::write(dir.join("cov_summary.json"), serde_json::to_string_pretty(&doc)? + "\n")?;
    }
    Ok(CovarianceStudy { estimates, comparisons })
}
