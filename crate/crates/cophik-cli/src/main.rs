//! Batch front end for the GP regression toolkit.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 numerical
//! failure, 4 I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use cophik_cli::commands::*;
use cophik_cli::formats::RunConfig;

#[derive(Parser)]
#[command(
    name = "cophik",
    about = "GP regression with ensemble-informed priors, multifidelity CoKriging, active learning, and constraint-bound verification",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded realization ensemble of the built-in stochastic model
    EnsembleGen {
        /// output directory for the members and manifest
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// grid as lo:hi:n per axis, comma separated
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// number of realizations
        #[arg(long)]
        members: Option<usize>,
    },
    /// Fit a learner and write posterior mean/RMSE fields plus a fit report
    Fit {
        #[arg(long)]
        learner: String,
        /// observation table (x1,...,xd,value)
        #[arg(long)]
        obs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        grid: Option<String>,
        /// ensemble directory (required for phik/modified-phik/cophik)
        #[arg(long)]
        ensemble: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit a learner and write posterior mean/RMSE fields only
    Predict {
        #[arg(long)]
        learner: String,
        #[arg(long)]
        obs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        ensemble: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Greedy sequential observation placement at the posterior-MSE maximizer
    ActiveLearn {
        #[arg(long)]
        learner: String,
        /// ground-truth field file queried for new observations
        #[arg(long)]
        oracle: PathBuf,
        /// initial observation table
        #[arg(long)]
        obs: PathBuf,
        /// total observation budget
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        ensemble: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a linear-constraint error bound and write the report
    VerifyBound {
        #[arg(long)]
        ensemble: PathBuf,
        #[arg(long)]
        obs: PathBuf,
        /// ddx:<axis>, laplacian, or point:<i,j,...>
        #[arg(long)]
        operator: String,
        /// 1 = mean-shifted ensemble learner, 2 = two-level CoKriging
        #[arg(long, default_value_t = 1)]
        theorem: u8,
        /// directory of per-member constraint fields member_NNNN.fld
        #[arg(long)]
        g_dir: Option<PathBuf>,
        /// constraint tolerance; estimated from the ensemble when absent
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the built-in benchmark end to end
    BenchBranin {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn init_threads() {
    if let Ok(raw) = std::env::var("COPHIK_THREADS") {
        if let Ok(n) = raw.parse::<usize>() {
            if n > 0 {
                // ignore failure: the pool may already exist in tests
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        } else {
            eprintln!("warning: ignoring unparsable COPHIK_THREADS=`{raw}`");
        }
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::EnsembleGen { out, config, grid, seed, members } => {
            cmd_ensemble_gen(EnsembleGenArgs {
                cfg: load_config(&config)?,
                grid_spec: grid,
                seed,
                members,
                out: &out,
            })
        }
        Command::Fit { learner, obs, out, grid, ensemble, config, seed } => {
            cmd_fit_predict(FitArgs {
                cfg: load_config(&config)?,
                learner,
                obs_path: &obs,
                grid_spec: grid,
                ensemble_dir: ensemble.as_deref(),
                seed,
                out: &out,
                with_report: true,
            })
        }
        Command::Predict { learner, obs, out, grid, ensemble, config, seed } => {
            cmd_fit_predict(FitArgs {
                cfg: load_config(&config)?,
                learner,
                obs_path: &obs,
                grid_spec: grid,
                ensemble_dir: ensemble.as_deref(),
                seed,
                out: &out,
                with_report: false,
            })
        }
        Command::ActiveLearn { learner, oracle, obs, n_max, out, ensemble, config, seed } => {
            cmd_active_learn(ActiveLearnArgs {
                cfg: load_config(&config)?,
                learner,
                oracle_path: &oracle,
                obs_path: &obs,
                n_max,
                ensemble_dir: ensemble.as_deref(),
                seed,
                out: &out,
            })
        }
        Command::VerifyBound {
            ensemble,
            obs,
            operator,
            theorem,
            g_dir,
            epsilon,
            out,
            config,
            seed,
        } => cmd_verify_bound(VerifyBoundArgs {
            cfg: load_config(&config)?,
            ensemble_dir: &ensemble,
            obs_path: &obs,
            operator,
            theorem,
            g_dir: g_dir.as_deref(),
            epsilon,
            seed,
            out: &out,
        }),
        Command::BenchBranin { out, config, seed } => {
            cmd_bench_branin(BenchArgs { cfg: load_config(&config)?, seed, out: &out })
        }
    }
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    use cophik::CophikError;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CophikError>() {
            return match e {
                CophikError::NuggetExhausted { .. }
                | CophikError::Degenerate(_)
                | CophikError::OptimizationFailed(_)
                | CophikError::NonFinite { .. } => 3,
                _ => 2,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 4;
        }
    }
    2
}

fn main() -> ExitCode {
    init_threads();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
