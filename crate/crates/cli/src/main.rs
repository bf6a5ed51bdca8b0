//! `cglab` — batch experiment runner for the coarse-graining laboratory.
//!
//! Verbs: `field` (write coefficient snapshots), `coarsen` (multiscale
//! coarse-matrix reports), `verify <harness>` (run one verification harness),
//! `report` (aggregate artifacts). Exit codes: 0 success/PASS, 1 validation
//! error, 2 solver failure, 3 property FAIL.

mod commands;
mod config;
mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use commands::{dispatch, ensure_out_dir, error_exit_code};
use config::{Command, ExperimentConfig, Harness};

#[derive(Parser)]
#[command(name = "cglab", version, about = "coarse-graining laboratory runner")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration file
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides [output] dir)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (overrides [run] threads)
    #[arg(long)]
    threads: Option<usize>,
    /// Added to every configured seed
    #[arg(long, default_value_t = 0)]
    seed_offset: u64,
}

#[derive(Subcommand)]
enum Verb {
    /// Generate coefficient-field snapshots, one per seed
    Field(CommonArgs),
    /// Compute multiscale coarse-matrix reports with invariant checks
    Coarsen(CommonArgs),
    /// Run one verification harness over the ensemble
    Verify {
        /// caccioppoli, approx, liouville, excess, or dims
        harness: String,
        #[command(flatten)]
        args: CommonArgs,
    },
    /// Aggregate and re-validate the artifacts in the output directory
    Report(CommonArgs),
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = Cli::parse();
    let (command, args) = match cli.verb {
        Verb::Field(args) => (Command::Field, args),
        Verb::Coarsen(args) => (Command::Coarsen, args),
        Verb::Verify { harness, args } => match Harness::parse(&harness) {
            Ok(h) => (Command::Verify(h), args),
            Err(e) => {
                eprintln!("{e}");
                return 1;
            }
        },
        Verb::Report(args) => (Command::Report, args),
    };
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("io: reading {}: {e}", args.config.display());
            return 1;
        }
    };
    let mut cfg = match ExperimentConfig::from_text(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return 1;
        }
    };
    cfg.apply_seed_offset(args.seed_offset);
    if let Some(out) = args.out {
        cfg.out_dir = out;
    }
    if let Some(t) = args.threads {
        if t == 0 {
            eprintln!("validation: --threads must be at least 1");
            return 1;
        }
        cfg.threads = t;
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build_global()
    {
        eprintln!("validation: thread pool: {e}");
        return 1;
    }
    if let Err(e) = ensure_out_dir(&cfg.out_dir) {
        eprintln!("{e}");
        return 1;
    }
    match dispatch(&cfg, command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{e}");
            error_exit_code(&e)
        }
    }
}
