//! `obstacle-path`: minimal-energy curves around a convex obstacle.
//!
//! Exit codes: 0 success, 1 configuration or input error, 2 no start
//! converged, 3 a structure check failed.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use commands::Outcome;
use config::{Format, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "obstacle-path", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize the discrete energy from p to q with multiple starts.
    Solve(Common),
    /// Closed-form minimizer for a sphere obstacle.
    Analytic(Common),
    /// Check the structure of a curve read from CSV (or JSON by extension).
    Verify {
        curve: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Label a lattice of targets q as unique or non-unique.
    Scan(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Encoding of the scan map.
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for `scan`; other commands run on one thread.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    n_segments: Option<usize>,
    #[arg(long)]
    n_starts: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    grad_tol: Option<f64>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        cfg.apply(&Overrides {
            out: self.out.clone(),
            format: self.format,
            seed: self.seed,
            n_segments: self.n_segments,
            n_starts: self.n_starts,
            max_iters: self.max_iters,
            grad_tol: self.grad_tol,
        });
        Ok(cfg)
    }
}

fn init_threads(jobs: Option<usize>) -> Result<()> {
    if jobs == Some(0) {
        anyhow::bail!("--jobs must be at least 1");
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        builder = builder.num_threads(n);
    }
    builder.build_global()?;
    Ok(())
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Solve(c) => {
            init_threads(Some(1))?;
            commands::cmd_solve(&c.load()?)
        }
        Command::Analytic(c) => {
            init_threads(Some(1))?;
            commands::cmd_analytic(&c.load()?)
        }
        Command::Verify { curve, common } => {
            init_threads(Some(1))?;
            commands::cmd_verify(&curve, &common.load()?)
        }
        Command::Scan(c) => {
            init_threads(c.jobs)?;
            commands::cmd_scan(&c.load()?)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("OBSTACLE_PATH_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(outcome) => ExitCode::from(outcome.exit_code()),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
