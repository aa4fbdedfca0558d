//! `bpn` — train, sweep, evaluate, export, and benchmark binarized
//! P-networks on the pixel-rendered control tasks.
//!
//! Exit codes: 0 success, 2 usage error, 3 runtime failure.

use bpn_cli::{commands, TrainFlags};
use clap::{Parser, Subcommand};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser)]
#[command(name = "bpn", version, about = "Binarized P-Network lab", max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one training run, writing curves, checkpoints, and a manifest.
    Train {
        #[command(flatten)]
        flags: TrainFlags,
        /// Output directory (default: runs/<env>-<algo>-s<seed>-<run id>)
        #[arg(long)]
        out: Option<std::path::PathBuf>,
    },
    /// Run an N × α grid of training runs and emit heatmap.csv.
    Sweep {
        #[command(flatten)]
        flags: TrainFlags,
        /// Output directory for all cells
        #[arg(long, default_value = "sweep")]
        out: std::path::PathBuf,
        /// Node-count grid (comma separated)
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        nodes_grid: Option<Vec<usize>>,
        /// α grid (comma separated)
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        alpha_grid: Option<Vec<f64>>,
        /// Seeds per cell
        #[arg(long)]
        seeds: Option<usize>,
        /// Use the full paper-scale grid (5 node counts × 5 α values × 5 seeds)
        #[arg(long)]
        full: bool,
    },
    /// Greedy-evaluate a checkpoint.
    Eval {
        /// Checkpoint file (BPN1)
        checkpoint: std::path::PathBuf,
        /// Environment (inferred from the observation shape when omitted)
        #[arg(long)]
        env: Option<String>,
        /// Episodes to run
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        /// Step cap per episode (default: the task's own cap)
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write every observation as a PNG under this directory
        #[arg(long)]
        dump_frames: Option<std::path::PathBuf>,
    },
    /// Compile-and-save a checkpoint copy, printing compression figures.
    Export {
        /// Source checkpoint (BPN1)
        checkpoint: std::path::PathBuf,
        /// Destination file
        #[arg(long)]
        out: std::path::PathBuf,
    },
    /// Benchmark packed inference against the naive float reference.
    Bench {
        /// Checkpoint file (BPN1, packed class)
        checkpoint: std::path::PathBuf,
        /// Timed inferences per network
        #[arg(long, default_value_t = 1000)]
        trials: usize,
    },
}

fn main() {
    env_logger::init();
    let cli = Cli::parse(); // clap exits with code 2 on usage errors
    let result = match cli.command {
        Command::Train { flags, out } => commands::train::run(&flags, out),
        Command::Sweep { flags, out, nodes_grid, alpha_grid, seeds, full } => {
            commands::sweep::run(&flags, &out, nodes_grid, alpha_grid, seeds, full)
        }
        Command::Eval { checkpoint, env, episodes, steps, seed, dump_frames } => {
            commands::eval::run(&checkpoint, env.as_deref(), episodes, steps, seed, dump_frames)
        }
        Command::Export { checkpoint, out } => commands::export::run(&checkpoint, &out),
        Command::Bench { checkpoint, trials } => commands::bench_cmd::run(&checkpoint, trials),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(3);
    }
}
