//! Command-line front end: reference tables, power-split optimization,
//! parameter sweeps, protocol simulation and the cross-oracle validation
//! suite, all emitting plot-ready CSV.
//!
//! Exit codes: 0 success, 1 computation/validation failure, 2 config error.

// see the library crate root: `!(x > lo)` guards also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(
    name = "relaykey",
    version,
    about = "Buffer-aided relay key generation: analytics and simulation",
    after_help = config::CONFIG_KEY_HELP
)]
struct Cli {
    /// Worker threads (overrides the RELAYKEY_THREADS environment variable;
    /// default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    verb: Verb,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// JSON config file (flat key-value schema; see --help for the keys).
    #[arg(long)]
    config: PathBuf,

    /// Override a config key, e.g. --set rho_db=25 --set beta='"optimize"'.
    /// Values parse as JSON, falling back to a bare string.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Verb {
    /// Reproduce the 60-cell reference table of optimized power splits.
    Table1 {
        /// Output CSV path.
        #[arg(long)]
        output: PathBuf,
    },
    /// Optimize the power split for one operating point.
    Optimize {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output CSV path (stdout if omitted).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Evaluate analytic (and optionally practical) quantities over a grid.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        output: PathBuf,
    },
    /// Run the Monte Carlo protocol simulator.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        output: PathBuf,
        /// Also dump trial 0's per-round trajectory to this CSV.
        #[arg(long)]
        dump_trajectory: Option<PathBuf>,
    },
    /// Run the cross-oracle validation suite (exit 0 iff every check passes).
    Validate {
        /// Test hook: additive perturbation applied to the analytic outage
        /// inside the Monte Carlo consistency check. Nonzero values are
        /// expected to make that check fail.
        #[arg(long, default_value_t = 0.0, hide_short_help = true)]
        marcum_perturb: f64,
    },
}

fn init_threads(flag: Option<usize>) {
    let from_env = std::env::var("RELAYKEY_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok());
    if let Some(n) = flag.or(from_env) {
        // ignore the error if a pool already exists (e.g. under a test harness)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads(cli.threads);
    let result = match cli.verb {
        Verb::Table1 { output } => commands::cmd_table1(&output),
        Verb::Optimize { cfg, output } => commands::cmd_optimize(&cfg, output.as_deref()),
        Verb::Sweep { cfg, output } => commands::cmd_sweep(&cfg, &output),
        Verb::Simulate { cfg, output, dump_trajectory } => {
            commands::cmd_simulate(&cfg, &output, dump_trajectory.as_deref())
        }
        Verb::Validate { marcum_perturb } => commands::cmd_validate(marcum_perturb),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
