use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use cstr_sim::cli::{self, Overrides};

/// Run a time-reversal precoding experiment described by a TOML config.
#[derive(Parser)]
#[command(
    version,
    after_help = "Exit status:\n  0  success\n  2  bad command-line usage\n  3  invalid configuration\n  4  I/O failure\n  5  malformed input data file\n  6  computation error (e.g. all-zero channel)"
)]
struct Args {
    /// Run configuration (TOML).
    config: PathBuf,
    /// Seed for the synthetic ensemble and subset sampling.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let overrides = Overrides {
        seed: args.seed,
        output_dir: args.out,
        workers: args.workers,
    };
    match cli::run(&args.config, &overrides) {
        Ok(manifest) => {
            for w in &manifest.warnings {
                eprintln!("warning: {w}");
            }
            for f in &manifest.files {
                println!("{}  {}", f.sha256, f.name);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
