//! Thin CLI over the library commands. Exit codes: 0 success, 1 validation
//! error, 2 runtime failure.

use clap::{Parser, Subcommand};
use runoff::commands;
use runoff::config::RunConfig;
use runoff::error::Error;

#[derive(Parser)]
#[command(name = "runoff", version, about = "Bayesian loss development and forecasting for run-off triangles")]
struct Cli {
    /// Path to the JSON run configuration.
    #[arg(long, global = true, default_value = "runoff.json")]
    config: std::path::PathBuf,

    /// Override the configured base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the prior scale multiplier (0.5 / 1.0 / 2.0 sensitivity runs).
    #[arg(long, global = true)]
    kappa: Option<f64>,

    /// Override the input corpus path.
    #[arg(long, global = true)]
    input: Option<std::path::PathBuf>,

    /// Override the output directory.
    #[arg(long, global = true)]
    output_dir: Option<std::path::PathBuf>,

    /// Override the forecast horizon.
    #[arg(long, global = true)]
    horizon: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit development models per triangle and simulate ultimates.
    Develop,
    /// Fit forecasters on development outputs and project future years.
    Forecast,
    /// Simulation-based calibration of a model family.
    Sbc,
    /// Leave-future-out backtest over a corpus of full squares.
    Backtest,
    /// Re-derive stacking weights from backtest scores.
    Stack,
    /// Walk forecasted ultimates back to paid-loss paths.
    Cashflow,
}

fn main() {
    if let Ok(workers) = std::env::var("RUNOFF_WORKERS") {
        if let Ok(n) = workers.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let cli = Cli::parse();
    std::process::exit(match run(cli) {
        Ok(()) => 0,
        Err(Error::Validation(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    });
}

fn run(cli: Cli) -> runoff::Result<()> {
    let mut cfg = RunConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(kappa) = cli.kappa {
        cfg.kappa = kappa;
    }
    if let Some(input) = cli.input {
        cfg.input = input;
    }
    if let Some(dir) = cli.output_dir {
        cfg.output_dir = dir;
    }
    if let Some(horizon) = cli.horizon {
        cfg.horizon = horizon;
    }
    let manifest = match cli.command {
        Command::Develop => commands::cmd_develop(&cfg)?,
        Command::Forecast => commands::cmd_forecast(&cfg)?,
        Command::Sbc => commands::cmd_sbc(&cfg)?,
        Command::Backtest => commands::cmd_backtest(&cfg)?,
        Command::Stack => commands::cmd_stack(&cfg)?,
        Command::Cashflow => commands::cmd_cashflow(&cfg)?,
    };
    println!(
        "{}: wrote {} file(s) to {}",
        manifest.command,
        manifest.files.len(),
        cfg.output_dir.join(&manifest.command).display()
    );
    Ok(())
}
