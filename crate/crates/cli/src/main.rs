//! `hamflow`: spectral flow, Chern vectors and degeneracy scans for
//! homoclinic Hamiltonian families over tori.
//!
//! Exit codes: 0 success, 1 failed verification, 2 configuration error,
//! 3 numerical (or I/O) failure.

mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hamflow_core::systems::FamilyKind;

use commands::Failure;

#[derive(Debug, Parser)]
#[command(name = "hamflow", version, about = "Spectral flow and bifurcation of homoclinic solutions over T^k")]
struct Cli {
    /// Worker threads (default: config `workers`, else all cores).
    #[arg(long, global = true, env = "HAMFLOW_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BuiltinFamily {
    Example,
    CompactControl,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the example family against its closed-form answers.
    VerifyExample {
        /// Torus dimension.
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
        /// `compact-control` runs the negative control (expects zero flow).
        #[arg(long, value_enum, default_value_t = BuiltinFamily::Example)]
        family: BuiltinFamily,
        /// Gap samples along the loop.
        #[arg(long, default_value_t = 64)]
        grid: usize,
    },
    /// Run the analysis described by a TOML config.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Scan the degeneracy set using the config's scan settings.
    Scan {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Quick internal consistency checks.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Validate a config's family and print it in normalized form.
    CheckFamily {
        #[arg(long)]
        config: PathBuf,
    },
}

fn init_pool(workers: Option<usize>) -> Result<(), Failure> {
    if let Some(n) = workers {
        if n == 0 {
            return Err(Failure::Config("workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(format!("cannot start {n} workers: {e}")))?;
    }
    Ok(())
}

fn analyze(config: &Path, out: Option<PathBuf>, workers: Option<usize>, force_scan: bool) -> Result<(), Failure> {
    let cfg = commands::load_config(config)?;
    init_pool(workers.or(cfg.workers))?;
    let out = out.unwrap_or_else(|| cfg.output_dir.clone());
    commands::analyze(&cfg, force_scan, &out)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::VerifyExample { k, out, family, grid } => {
            init_pool(cli.workers)?;
            let kind = match family {
                BuiltinFamily::Example => FamilyKind::Example,
                BuiltinFamily::CompactControl => FamilyKind::CompactControl,
            };
            commands::verify_example(k, kind, grid, &out)
        }
        Command::Analyze { config, out } => analyze(&config, out, cli.workers, false),
        Command::Scan { config, out } => analyze(&config, out, cli.workers, true),
        Command::Selftest { seed } => {
            init_pool(cli.workers)?;
            commands::selftest(seed)
        }
        Command::CheckFamily { config } => commands::check_family(&commands::load_config(&config)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("hamflow: {f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
