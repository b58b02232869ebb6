use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mpfair_cli::{commands, config, CliError};

/// Mean-parity fair kernel regression experiments.
///
/// Exit codes: 0 success, 1 invariant failure, 2 input or schema error,
/// 3 sensitive kernel does not separate the groups.
#[derive(Parser)]
#[command(name = "mpfair", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; the built-in default is used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config field, e.g. `--set data.n=500` or `--set lambda=1`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit every configured method and write report.json and metrics.csv.
    FitEval(Common),
    /// Sweep the fairness/accuracy interpolation and write tradeoff.csv.
    Tradeoff(Common),
    /// Write per-group histograms of targets and fair predictions.
    Histograms {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 30)]
        bins: usize,
    },
    /// Run the invariant checks on the configured instance.
    Check(Common),
    /// Write the configured synthetic dataset as CSV.
    GenSynthetic(Common),
}

fn load(common: &Common) -> Result<config::ExperimentConfig, CliError> {
    let mut overrides = common.overrides.clone();
    if let Some(seed) = common.seed {
        overrides.push(format!("seed={seed}"));
    }
    if let Some(dir) = &common.out_dir {
        let text = serde_json::to_string(&dir.to_string_lossy())?;
        overrides.push(format!("out_dir={text}"));
    }
    config::load(common.config.as_deref(), &overrides)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::FitEval(c) => commands::fit_eval(&load(&c)?),
        Command::Tradeoff(c) => commands::tradeoff(&load(&c)?),
        Command::Histograms { common, bins } => commands::histograms(&load(&common)?, bins),
        Command::Check(c) => commands::check(&load(&c)?),
        Command::GenSynthetic(c) => commands::gen_synthetic_csv(&load(&c)?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
