use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use noneq_cat_cli::oracle_check::{oracle_check, EXPONENT_RANGE};
use noneq_cat_cli::run::{run, run_kernels};
use noneq_cat_cli::sweep::{sweep, Axis};
use noneq_cat_cli::{CliError, ExperimentConfig, Result};

#[derive(Debug, Parser)]
#[command(name = "noneq-cat", version, about = "Cat-state generation and decoherence between two thermal baths")]
struct Cli {
    /// Root directory for output bundles.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,

    /// Worker threads; all cores when absent.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evolve one configuration and write its bundle.
    Run { config: PathBuf },
    /// Run the Cartesian product of the given axes.
    Sweep {
        config: PathBuf,
        /// `key=v1,v2,…` with key in epsilon, kappa_h, kappa_c, kappa (hot:cold pairs), s, theta, regime, detector, swap_baths.
        #[arg(long = "axis", required = true)]
        axes: Vec<String>,
    },
    /// Tabulate the hot and cold correlation kernels.
    Kernel { config: PathBuf },
    /// Compare second-order evolution against exact evolution with a small discrete bath.
    OracleCheck { config: PathBuf },
}

fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config } => {
            let summary = run(&ExperimentConfig::load(&config)?, &cli.out)?;
            println!("{}", summary.dir.display());
            println!(
                "detection_probability = {:e}\nnegativity_volume = {:e}\nnormalization_residual = {:e}",
                summary.detection_probability, summary.negativity, summary.normalization_residual
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { config, axes } => {
            let axes = axes.iter().map(|a| a.parse::<Axis>()).collect::<Result<Vec<_>>>()?;
            let report = sweep(&ExperimentConfig::load(&config)?, &axes, &cli.out)?;
            println!("{}", report.dir.display());
            for row in &report.rows {
                println!("{} {}", row.hash, row.status);
            }
            if report.failures() > 0 {
                eprintln!("{} of {} points failed", report.failures(), report.rows.len());
                return Ok(ExitCode::from(3));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Kernel { config } => {
            let dir = run_kernels(&ExperimentConfig::load(&config)?, &cli.out)?;
            println!("{}", dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::OracleCheck { config } => {
            let check = oracle_check(&ExperimentConfig::load(&config)?, &cli.out)?;
            println!("{}", check.dir.display());
            for row in &check.rows {
                println!("j0 = {:e}: frob_distance = {:e} ± {:e}", row.j0, row.frob_distance, row.mc_stderr);
            }
            println!("gap exponents {:?} (accepted {:?})", check.exponents, EXPONENT_RANGE);
            Ok(if check.passed() { ExitCode::SUCCESS } else { ExitCode::from(3) })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("{}", CliError::Config(format!("--threads: {e}")));
            return ExitCode::from(2);
        }
    }
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
