//! `rs-regime <command> --config <path> [--force] [--threads n]`
//!
//! Exit status: 0 on success, 2 for unusable input, 3 for numerical failures and failed
//! checks.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use commands::{Failure, Summary};
use config::{Overrides, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    /// Solve the HJB equation and write the value surface with allocations.
    Solve,
    /// Kelly allocations on every coefficient piece.
    Kelly,
    /// Monte Carlo estimate of the criterion against the solved or exact value.
    Simulate,
    /// Check E[chi_T] = 1 and the entropy bound.
    VerifyMartingale,
    /// Check the tilted generator by importance weighting.
    VerifyGenerator,
    /// Solve with coinciding and with independent jumps and compare.
    CompareIndependent,
}

impl Command {
    fn name(self) -> String {
        self.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default()
    }
}

#[derive(Debug, Parser)]
#[command(name = "rs-regime", version, about = "Risk-sensitive allocation with regime switches and jumps")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overwrite existing output files.
    #[arg(long)]
    force: bool,
    /// Worker threads; all cores when unset.
    #[arg(long, env = "RS_REGIME_THREADS")]
    threads: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    n_steps: Option<usize>,
    #[arg(long)]
    n_paths: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn run(cli: &Cli) -> Result<Summary, Failure> {
    let overrides = Overrides {
        output_path: cli.output.clone(),
        theta: cli.theta,
        n_steps: cli.n_steps,
        n_paths: cli.n_paths,
        seed: cli.seed,
    };
    let cfg = RunConfig::load(&cli.config, &overrides).map_err(Failure::Input)?;
    if let Some(c) = &cfg.command {
        if *c != cli.command.name() {
            return Err(Failure::Input(anyhow::anyhow!("config is for `{c}`, not `{}`", cli.command.name())));
        }
    }
    match cli.command {
        Command::Solve => commands::solve(&cfg, cli.force),
        Command::Kelly => commands::kelly(&cfg, cli.force),
        Command::Simulate => commands::simulate(&cfg, cli.force),
        Command::VerifyMartingale => commands::verify_martingale_cmd(&cfg, cli.force),
        Command::VerifyGenerator => commands::verify_generator_cmd(&cfg, cli.force),
        Command::CompareIndependent => commands::compare_independent(&cfg, cli.force),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return ExitCode::from(2);
        }
    };
    match pool.install(|| run(&cli)) {
        Ok(summary) => {
            for line in &summary.lines {
                println!("{line}");
            }
            for p in &summary.written {
                println!("wrote {}", p.display());
            }
            if summary.passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("error: {} finished but some checks failed", cli.command.name());
                ExitCode::from(3)
            }
        }
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.exit_code())
        }
    }
}
