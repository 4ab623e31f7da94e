use bribery_ge::pipeline::{
    cmd_solve_one, exit_code, run_calibrate, run_counterfactuals, run_estimate, run_ingest,
    RunConfig,
};
use bribery_ge::Result;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Heterogeneous-firm general-equilibrium model of bribery and technology
/// choice: data ingestion, estimation, calibration, equilibrium solution,
/// and counterfactual scenarios.
#[derive(Parser)]
#[command(name = "bribery-ge", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonFlags {
    /// Flat key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for batch stages (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Gauss-Legendre node count for the equilibrium integrals.
    #[arg(long, global = true)]
    quad_nodes: Option<usize>,
    /// Calibration acceptance tolerance (max relative moment error).
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Comma-separated scenario list, e.g. "no-bribery,scale-modern-tfp:1.2".
    #[arg(long, global = true)]
    scenario: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Load survey CSVs, classify firms, and emit per-survey moments.
    Ingest {
        #[command(flatten)]
        common: CommonFlags,
        /// Directory of survey CSV files.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Ingest plus pooled production-parameter estimation.
    Estimate {
        #[command(flatten)]
        common: CommonFlags,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Calibrate every country in the targets CSV.
    Calibrate {
        #[command(flatten)]
        common: CommonFlags,
        /// Calibration targets CSV.
        #[arg(long)]
        targets: Option<PathBuf>,
    },
    /// Solve one economy from a parameters JSON file and print it.
    Solve {
        #[command(flatten)]
        common: CommonFlags,
        /// EconomyParams JSON file.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Calibrate and run the configured scenarios into group tables.
    Counterfactual {
        #[command(flatten)]
        common: CommonFlags,
        #[arg(long)]
        targets: Option<PathBuf>,
    },
    /// Full run: ingest, estimate, calibrate, solve, scenarios, report.
    Pipeline {
        #[command(flatten)]
        common: CommonFlags,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        targets: Option<PathBuf>,
    },
}

fn build_config(common: &CommonFlags) -> Result<RunConfig> {
    let mut config = RunConfig::default();
    if let Some(path) = &common.config {
        config.load_file(path)?;
    }
    if let Some(out) = &common.out {
        config.out_dir = out.clone();
    }
    if let Some(jobs) = common.jobs {
        config.jobs = Some(jobs);
    }
    if let Some(n) = common.quad_nodes {
        config.quad_nodes = n;
    }
    if let Some(tol) = common.tol {
        config.tol = tol;
    }
    if let Some(list) = &common.scenario {
        config.set("scenarios", list)?;
    }
    Ok(config)
}

#[cfg(feature = "parallel")]
fn configure_pool(jobs: Option<usize>) {
    if let Some(n) = jobs {
        // Ignore the error when a pool already exists (e.g. repeated calls
        // in tests); the first configuration wins.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

#[cfg(not(feature = "parallel"))]
fn configure_pool(_jobs: Option<usize>) {}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Ingest { common, input } => {
            let mut config = build_config(&common)?;
            if let Some(input) = input {
                config.input_dir = Some(input);
            }
            configure_pool(config.jobs);
            let report = run_ingest(&config)?;
            eprintln!(
                "ingested {} surveys ({} skipped) into {}",
                report.moments.len(),
                report.dropped.len(),
                config.out_dir.display()
            );
        }
        Command::Estimate { common, input } => {
            let mut config = build_config(&common)?;
            if let Some(input) = input {
                config.input_dir = Some(input);
            }
            configure_pool(config.jobs);
            let est = run_estimate(&config)?;
            eprintln!(
                "estimated gamma0={:.4} gamma1={:.4} -> (sigma0,alpha0)=({:.3},{:.3}) (sigma1,alpha1)=({:.3},{:.3})",
                est.gamma0, est.gamma1, est.sigma0, est.alpha0, est.sigma1, est.alpha1
            );
        }
        Command::Calibrate { common, targets } => {
            let mut config = build_config(&common)?;
            if let Some(t) = targets {
                config.targets = Some(t);
            }
            configure_pool(config.jobs);
            let results = run_calibrate(&config)?;
            let converged = results.iter().filter(|c| c.converged).count();
            eprintln!("calibrated {}/{} countries", converged, results.len());
        }
        Command::Solve { common, params } => {
            let mut config = build_config(&common)?;
            if let Some(p) = params {
                config.params_file = Some(p);
            }
            print!("{}", cmd_solve_one(&config)?);
        }
        Command::Counterfactual { common, targets } => {
            let mut config = build_config(&common)?;
            if let Some(t) = targets {
                config.targets = Some(t);
            }
            configure_pool(config.jobs);
            run_counterfactuals(&config)?;
            eprintln!(
                "wrote {} scenario tables to {}",
                config.scenarios.len(),
                config.out_dir.display()
            );
        }
        Command::Pipeline { common, input, targets } => {
            let mut config = build_config(&common)?;
            if let Some(input) = input {
                config.input_dir = Some(input);
            }
            if let Some(t) = targets {
                config.targets = Some(t);
            }
            configure_pool(config.jobs);
            bribery_ge::pipeline::cmd_pipeline(&config)?;
            eprintln!("pipeline complete: {}", config.out_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
