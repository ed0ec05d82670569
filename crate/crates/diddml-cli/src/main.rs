use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use diddml_cli::commands::{self, Overrides};

/// Difference-in-differences policy evaluation with double machine learning.
#[derive(Parser)]
#[command(name = "diddml", version, about)]
struct Cli {
    /// Path to the run configuration (TOML).
    #[arg(long, global = true, default_value = "diddml.toml")]
    config: PathBuf,

    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads (default: config value, then DIDDML_THREADS, then all
    /// cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the config and inputs; exit non-zero on any failed check.
    Validate,
    /// Emit the treatment-assignment table from the policy panel.
    Assign,
    /// Run the configured estimator and write the result record.
    Estimate,
    /// Leave-one-control-unit-out placebo analysis.
    Placebo,
    /// Subgroup estimates with Benjamini-Hochberg adjustment.
    Heterogeneity,
    /// Monte Carlo replications on the synthetic process.
    Simulate,
    /// Error-bar SVG over the estimate records in a results directory.
    Plot {
        /// Directory to scan for estimate JSON files (default: out dir).
        #[arg(long)]
        results: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let env_threads = std::env::var("DIDDML_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok());
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out,
        threads: cli.threads.or(env_threads),
    };

    let run = || -> diddml::Result<()> {
        let cfg = commands::prepare_run(&cli.config, &overrides)?;
        match &cli.command {
            Command::Validate => commands::cmd_validate(&cfg),
            Command::Assign => commands::cmd_assign(&cfg),
            Command::Estimate => commands::cmd_estimate(&cfg),
            Command::Placebo => commands::cmd_placebo(&cfg),
            Command::Heterogeneity => commands::cmd_heterogeneity(&cfg),
            Command::Simulate => commands::cmd_simulate(&cfg),
            Command::Plot { results } => commands::cmd_plot(&cfg, results.as_deref()),
        }
    };

    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
