use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dsaawet::cli::{cmd_compare, cmd_run, cmd_sweep, cmd_validate, parse_seeds, CommandOptions};

/// Distributed stochastic approximation with expanding truncations.
#[derive(Parser)]
#[command(name = "dsaawet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write metrics, events and a summary.
    Run(Common),
    /// Check a scenario and its topology without running it.
    Validate(Common),
    /// Run the truncated and untruncated algorithms on shared noise.
    Compare(Common),
    /// Run a scenario for several seeds.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Seeds as `a..b`, `a..=b` or a comma-separated list.
        #[arg(long, default_value = "0..10")]
        seeds: String,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    scenario: PathBuf,
    /// Output directory.
    #[arg(long, env = "DSAAWET_OUT", default_value = "out")]
    out: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for sweeps.
    #[arg(long)]
    jobs: Option<usize>,
    /// Record every state (needed for the recursion and noise checks).
    #[arg(long)]
    full_trace: bool,
    /// Exit with status 3 if any enabled check fails.
    #[arg(long)]
    strict_checks: bool,
}

impl Common {
    fn options(&self) -> CommandOptions {
        CommandOptions {
            out: self.out.clone(),
            seed: self.seed,
            jobs: self.jobs,
            full_trace: self.full_trace,
            strict_checks: self.strict_checks,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut out = io::stdout().lock();
    let result = match &cli.command {
        Command::Run(c) => cmd_run(&c.scenario, &c.options(), &mut out),
        Command::Validate(c) => cmd_validate(&c.scenario, &c.options(), &mut out),
        Command::Compare(c) => cmd_compare(&c.scenario, &c.options(), &mut out),
        Command::Sweep { common, seeds } => match parse_seeds(seeds) {
            Ok(list) => cmd_sweep(&common.scenario, &list, &common.options(), &mut out),
            Err(e) => {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
        },
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
