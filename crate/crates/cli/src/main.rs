use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod plot;

use commands::{Failure, Outcome};

/// Discounted Hamilton-Jacobi solver and weak KAM diagnostics on flat tori.
#[derive(Parser, Debug)]
#[command(name = "weakkam", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration; unspecified fields take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Discount for `solve` and `check` (overrides the config).
    #[arg(long, global = true, allow_negative_numbers = true)]
    lambda: Option<f64>,

    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Nodes per dimension (overrides the config).
    #[arg(long, global = true)]
    grid: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate the critical value c(H).
    Critical,
    /// Forward solution, ground state, calibrated set and residual at one discount.
    Solve,
    /// Discount sweep with the conjugate, representation, star and usc checks.
    Sweep,
    /// Aubry set, static classes and Mather support.
    Aubry,
    /// Peierls barrier from the configured source point.
    Barrier,
    /// Property suite of the discrete backward operator.
    Check,
    /// Emit a gnuplot script for a result directory (defaults to --out).
    Plot { dir: Option<PathBuf> },
}

fn run(cli: Cli) -> Result<Outcome, Failure> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(commands::config_error("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::Config(e.into()))?;
    }
    let mut cfg = config::load(cli.config.as_deref()).map_err(Failure::Config)?;
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    if let Some(n) = cli.grid {
        cfg.n = n;
    }
    if let Some(l) = cli.lambda {
        cfg.lambda = l;
    }
    if let Command::Plot { dir } = &cli.command {
        let dir = dir.clone().unwrap_or(cfg.out);
        let path = plot::emit(&dir).map_err(Failure::Config)?;
        println!("wrote {}", path.display());
        return Ok(Outcome::Pass);
    }
    let resolved = cfg.resolve().map_err(Failure::Config)?;
    match cli.command {
        Command::Critical => commands::cmd_critical(&resolved),
        Command::Solve => commands::cmd_solve(&resolved),
        Command::Sweep => commands::cmd_sweep(&resolved),
        Command::Aubry => commands::cmd_aubry(&resolved),
        Command::Barrier => commands::cmd_barrier(&resolved),
        Command::Check => commands::cmd_check(&resolved),
        Command::Plot { .. } => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::ChecksFailed) => {
            eprintln!("one or more checks failed");
            ExitCode::from(3)
        }
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code() as u8)
        }
    }
}
