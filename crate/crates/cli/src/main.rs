use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod oracle;
mod simulate;
mod sweep;

#[derive(Parser)]
#[command(name = "mems-sim", version, about = "Beam over a dielectric layer: implicit Euler simulation with contact")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the time-stepping scheme and write trace, snapshots and manifest.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Snapshot interval in steps (0 writes only the first and last).
        #[arg(long)]
        snapshot_every: Option<usize>,
        #[arg(long)]
        quiet: bool,
    },
    /// Run the reference checks (flat plate, manufactured solution, gradient).
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        quiet: bool,
    },
    /// Run one simulation per parameter value and aggregate the results.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        param: SweepParam,
        /// Comma-separated values; for `delta`, `delta0/k` is accepted.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<String>,
        #[arg(long)]
        quiet: bool,
    },
    /// Validate a configuration and print the derived constants.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        quiet: bool,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    #[value(name = "V")]
    V,
    #[value(name = "delta")]
    Delta,
    #[value(name = "n_x")]
    NX,
}

/// Exit status: 0 success, 1 run or check failure, 2 configuration error.
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Simulate {
            config,
            out,
            snapshot_every,
            quiet,
        } => simulate::cmd_simulate(&config, &out, snapshot_every, quiet),
        Command::Oracle { config, quiet } => oracle::cmd_oracle(&config, quiet),
        Command::Sweep {
            config,
            out,
            param,
            values,
            quiet,
        } => sweep::cmd_sweep(&config, &out, param, &values, quiet),
        Command::Validate { config, quiet } => simulate::cmd_validate(&config, quiet),
    };
    ExitCode::from(code)
}
