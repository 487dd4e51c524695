use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tekfac::optimizer::DampingKind;
use tekfac::{FisherFlavor, OptimizerKind};
use tekfac_cli::diagnostics::run_and_write_diagnostics;
use tekfac_cli::training::run_training;
use tekfac_cli::verify::{run_check, CHECK_COUNT};
use tekfac_cli::{ExperimentConfig, HarnessError, Overrides};

/// Kronecker-factored natural-gradient experiments.
#[derive(Parser, Debug)]
#[command(name = "tekfac", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model and write metrics.csv and summary.txt to the output directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Compare exact Fisher blocks with the four approximations on random networks.
    Diagnose {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Run the built-in numerical acceptance checks.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Run only these checks (1-based ids, comma separated).
        #[arg(long, value_delimiter = ',')]
        only: Vec<usize>,
    },
}

#[derive(Args, Debug, Default)]
struct OverrideArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// sgdm, adam, kfac, ekfac, tkfac or tekfac.
    #[arg(long)]
    method: Option<OptimizerKind>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    vartheta: Option<f64>,
    /// fixed or auto_trace.
    #[arg(long)]
    damping_mode: Option<DampingKind>,
    /// empirical or true.
    #[arg(long)]
    fisher: Option<FisherFlavor>,
}

impl From<OverrideArgs> for Overrides {
    fn from(a: OverrideArgs) -> Self {
        Overrides {
            seed: a.seed,
            method: a.method,
            eta: a.eta,
            vartheta: a.vartheta,
            damping_mode: a.damping_mode,
            fisher: a.fisher,
        }
    }
}

fn load(path: &Path, overrides: OverrideArgs) -> Result<ExperimentConfig, HarnessError> {
    let mut config = ExperimentConfig::load(path)?;
    Overrides::from(overrides).apply(&mut config);
    config.validate()?;
    Ok(config)
}

fn run(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::Train { config, overrides } => {
            let config = load(&config, overrides)?;
            let out = run_training(&config)?;
            print!("{}", out.outcome.summary);
            println!("metrics: {}", out.metrics.display());
        }
        Command::Diagnose {
            config,
            trials,
            overrides,
        } => {
            let config = load(&config, overrides)?;
            let out = run_and_write_diagnostics(&config, trials)?;
            println!(
                "{trials} trials, {} records, no ordering violations",
                out.report.records.len()
            );
            println!("table: {}", out.table.display());
            println!("snapshots: {}", out.snapshots.display());
        }
        Command::Verify { seed, only } => {
            let ids: Vec<usize> = if only.is_empty() {
                (1..=CHECK_COUNT).collect()
            } else {
                only
            };
            if let Some(bad) = ids.iter().find(|&&id| id == 0 || id > CHECK_COUNT) {
                return Err(HarnessError::Config(format!(
                    "no check {bad}; ids run 1..={CHECK_COUNT}"
                )));
            }
            let mut failed = 0;
            for id in ids {
                let result = run_check(id, seed);
                println!("{result}");
                failed += !result.passed as usize;
            }
            if failed > 0 {
                return Err(HarnessError::Verification(format!(
                    "{failed} check(s) failed"
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
