//! `fks` — scenario runner and verification toolkit for the doubly
//! parabolic chemotaxis system with fractional diffusion.
//!
//! Subcommands map onto the library's pillars: `feasibility` (exponent
//! calculus), `kernel` (semigroup norm scaling), `simulate` / `picard`
//! (mild-solution runs with invariance verdicts), `diagnose` (standalone
//! verification suites), and `batch` (multi-scenario fan-out).
//!
//! Exit codes: 0 on success, 2 when a solver or check fails, 3 for
//! configuration errors.

mod config;
mod run;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::CliError;
use run::Invocation;

#[derive(Parser)]
#[command(
    name = "fks",
    version,
    about = "Pseudo-spectral simulator and verification toolkit for a doubly \
             parabolic Keller-Segel system with fractional diffusion"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML); mutually exclusive with --preset.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Built-in preset name; see `--preset help` for the list.
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Output directory (precedence: --out, then FKS_OUT, then config).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed for randomized initial data and test fields.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dotted-path config override, e.g. --override system.alpha=1.8.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn invocation(self) -> Invocation {
        Invocation {
            preset: self.preset,
            config: self.config,
            out: self.out,
            seed: self.seed,
            overrides: self.overrides,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Exponent feasibility: hypothesis checks and region scans.
    #[command(subcommand)]
    Feasibility(FeasibilityCmd),
    /// Fit fractional heat kernel norm scaling against the exact exponent.
    Kernel(Common),
    /// Run a scenario with the configured solver and verdict gates.
    Simulate(Common),
    /// Run a scenario with the Picard constructor; prints the contraction.
    Picard(Common),
    /// Standalone verification: definition crosscheck and sign inequalities.
    Diagnose(Common),
    /// Run several scenario files through worker processes.
    Batch {
        /// Scenario files; each writes under OUT/<file stem>/.
        #[arg(required = true, value_name = "FILE")]
        configs: Vec<PathBuf>,
        /// Worker process cap (default: available parallelism).
        #[arg(long)]
        jobs: Option<usize>,
        /// Output directory (precedence: --out, then FKS_OUT).
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Seed forwarded to every worker.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum FeasibilityCmd {
    /// Check one exponent profile against the admissibility hypotheses.
    Check(Common),
    /// Classify a (p, r) rectangle and write scan.csv.
    Scan(Common),
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Feasibility(FeasibilityCmd::Check(c)) => {
            run::cmd_feasibility_check(&c.invocation())
        }
        Command::Feasibility(FeasibilityCmd::Scan(c)) => run::cmd_feasibility_scan(&c.invocation()),
        Command::Kernel(c) => run::cmd_kernel(&c.invocation()),
        Command::Simulate(c) => run::cmd_simulate(&c.invocation(), None),
        Command::Picard(c) => run::cmd_simulate(&c.invocation(), Some("picard")),
        Command::Diagnose(c) => run::cmd_diagnose(&c.invocation()),
        Command::Batch {
            configs,
            jobs,
            out,
            seed,
        } => run::cmd_batch(&configs, out.as_deref(), seed, jobs),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successes; anything else is a
            // malformed command line, i.e. a configuration error.
            let code = if e.use_stderr() { 3 } else { 0 };
            e.print().expect("writing clap output");
            std::process::exit(code);
        }
    };
    let code = match dispatch(cli) {
        Ok(()) => 0,
        Err(CliError::Check(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(CliError::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            3
        }
    };
    std::process::exit(code);
}
