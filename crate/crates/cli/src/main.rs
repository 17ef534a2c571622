use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedmm_cli::{cmd_check, cmd_run, cmd_sweep, error_line, exit_code, load_config, SweepAxis, SEED_ENV};

/// Federated minimax experiments: FedMM and GDA baselines.
///
/// Exit codes: 0 success, 1 internal error, 2 usage error, 3 invalid
/// configuration or input, 4 I/O failure, 5 divergence, 6 numerical
/// failure, 7 a diagnostic check failed, 8 a sweep sub-run failed.
#[derive(Debug, Parser)]
#[command(name = "fedmm", version, about, long_about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment and write its per-round CSV.
    Run {
        /// Config file (`key = value` lines, `#` comments).
        #[arg(long)]
        config: PathBuf,
        /// Override a config key, e.g. `--set hyper.rounds=50`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        /// Replaces the configured seed (explicit `--set seed=` still wins).
        #[arg(long, env = SEED_ENV, hide_env_values = true)]
        seed: Option<String>,
    },
    /// Run one experiment per value of an axis, plus an index CSV.
    ///
    /// Files are written next to the configured output as
    /// `sweep_<axis>_<value>.csv` and `sweep_<axis>_index.csv`.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// partition_p, optimizer or local_steps.
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated values, e.g. `0.5,0.75,1.0`.
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        values: Vec<String>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        #[arg(long, env = SEED_ENV, hide_env_values = true)]
        seed: Option<String>,
    },
    /// Run the built-in diagnostics suite and print a pass/fail table.
    Check {
        /// Quadratic instance file to check instead of the built-in one.
        #[arg(long)]
        fixture: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let code = match cli.command {
        Command::Run { config, sets, seed } => match load_config(&config, &sets, seed.as_deref()) {
            Ok(cfg) => cmd_run(&cfg, &mut out),
            Err(e) => {
                let _ = writeln!(out, "{}", error_line(&e));
                exit_code(&e)
            }
        },
        Command::Sweep {
            config,
            axis,
            values,
            sets,
            seed,
        } => match load_config(&config, &sets, seed.as_deref()) {
            Ok(cfg) => cmd_sweep(&cfg, axis, &values, &mut out),
            Err(e) => {
                let _ = writeln!(out, "{}", error_line(&e));
                exit_code(&e)
            }
        },
        Command::Check { fixture } => cmd_check(fixture.as_deref(), &mut out),
    };
    let _ = out.flush();
    ExitCode::from(u8::try_from(code).unwrap_or(1))
}
