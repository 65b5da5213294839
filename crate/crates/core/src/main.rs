use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use varopt::harness::{self, CliOverrides, SweepParam};

/// Momentum integrators for optimization on the sphere and the Stiefel
/// manifold, driven by JSON experiment configs.
#[derive(Parser)]
#[command(name = "varopt", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON). Relative CSV paths resolve against it.
    config: PathBuf,
    /// Where output CSVs go (default: the config's output_dir, or ./results).
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Record every n-th iteration, overriding the config.
    #[arg(long, global = true)]
    record_every: Option<usize>,
    /// Suppress progress output.
    #[arg(long, short, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run each configured method and write one trace CSV per method.
    Run(Common),
    /// Run all methods from one initial point and merge traces side by side.
    Compare(Common),
    /// Re-run the methods across values of one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Parameter to vary: p, h or p_ring.
        #[arg(long)]
        param: String,
        /// Comma-separated list of values, e.g. 2,4,6.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
}

impl Common {
    fn overrides(&self) -> CliOverrides {
        CliOverrides {
            output_dir: self.output_dir.clone(),
            record_every: self.record_every,
            quiet: self.quiet,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(common) => {
            harness::cmd_run(&common.config, &common.overrides()).map(|_| ())
        }
        Command::Compare(common) => {
            harness::cmd_compare(&common.config, &common.overrides()).map(|_| ())
        }
        Command::Sweep {
            common,
            param,
            values,
        } => SweepParam::parse(param)
            .and_then(|p| harness::cmd_sweep(&common.config, p, values, &common.overrides()))
            .map(|_| ()),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
