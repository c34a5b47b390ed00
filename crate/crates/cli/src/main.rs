//! `bpinn`: run catalog experiments and prior studies from the command line.
//!
//! Exit status is 0 on success, 2 for configuration or usage errors and 3 for
//! numerical failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bpinn::experiment::{
    prior_covariance_study, prior_density_study, run_experiment, CovarianceStudyConfig, DensityStudyConfig,
};
use bpinn::pde::CATALOG;
use bpinn::{Error, ExperimentConfig};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bpinn", version, about = "Bayesian PDE inference experiments")]
struct Cli {
    /// Directory under which run outputs are created.
    #[arg(long, global = true, env = "BPINN_OUTPUT_ROOT", default_value = "runs")]
    output_root: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Output directory; defaults to a name derived from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List catalog experiments, surrogates and estimators.
    List,
    /// Histograms of a prior network and its derivatives.
    PriorDensity {
        /// JSON overrides for the study settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Output covariance kernels for several prior architectures.
    PriorCov {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read_json<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, Error> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            Ok(serde_json::from_str(&text)?)
        }
        None => Ok(T::default()),
    }
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { config, out } => {
            let text =
                std::fs::read_to_string(&config).map_err(|e| Error::Config(format!("{}: {e}", config.display())))?;
            let cfg = ExperimentConfig::from_json(&text)?;
            let dir = out.unwrap_or_else(|| cli.output_root.join(cfg.run_label()));
            let s = run_experiment(&cfg, &dir)?;
            println!("wrote {}", dir.display());
            if let (Some(m), Some(t)) = (s.k_mean, s.k_true) {
                match s.k_std {
                    Some(sd) => println!("k: mean {m:.6} std {sd:.3e} (true {t})"),
                    None => println!("k: {m:.6} (true {t})"),
                }
            }
            println!("relative L2 error of u: {:.4e}", s.rel_l2_u);
            if let Some(f) = s.rel_l2_f {
                println!("relative L2 error of f: {f:.4e}");
            }
        }
        Command::List => {
            println!("experiments:");
            for name in CATALOG {
                println!("  {name}");
            }
            println!("surrogates: bnn, kl");
            println!("estimators: hmc, vi, dnf, dropout, pinn, gpr");
            println!("profiles: paper, desk");
        }
        Command::PriorDensity {
            config,
            samples,
            seed,
            out,
        } => {
            let mut cfg: DensityStudyConfig = read_json(config.as_deref())?;
            cfg.n_samples = samples.unwrap_or(cfg.n_samples);
            cfg.seed = seed.unwrap_or(cfg.seed);
            let dir = out.unwrap_or_else(|| cli.output_root.join("prior-density"));
            for s in prior_density_study(&cfg, Some(&dir))? {
                println!(
                    "{:>3} at x={:<4} excess kurtosis {:>9.4} (gaussian band +-{:.4}) {}",
                    s.quantity,
                    s.x,
                    s.excess_kurtosis,
                    3.0 * s.kurtosis_se,
                    if s.gaussian_band { "inside" } else { "outside" }
                );
            }
            println!("wrote {}", dir.display());
        }
        Command::PriorCov {
            config,
            samples,
            seed,
            out,
        } => {
            let mut cfg: CovarianceStudyConfig = read_json(config.as_deref())?;
            cfg.n_samples = samples.unwrap_or(cfg.n_samples);
            cfg.seed = seed.unwrap_or(cfg.seed);
            let dir = out.unwrap_or_else(|| cli.output_root.join("prior-cov"));
            let study = prior_covariance_study(&cfg, Some(&dir))?;
            for c in &study.comparisons {
                println!(
                    "{} vs {}: max |diff| {:.4}, max z {:.2}, entries within 3 SE {:.3}",
                    c.a, c.b, c.max_abs_diff, c.max_z, c.within_3se
                );
            }
            println!("wrote {}", dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() || matches!(e, Error::Io(_)) {
                if let Error::Config(msg) = &e {
                    if msg.starts_with("unknown experiment") {
                        eprintln!("run `bpinn list` for the catalog");
                    }
                }
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
