//! `drr` — experiment harness for drift-reducing rehearsal.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 runtime failure.

mod commands;
mod config;
mod plot;

use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "drr",
    about = "Online continual learning runs: drift-reducing rehearsal and replay baselines",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train with every listed seed and write one run directory per seed
    /// plus a mean±std aggregate.
    Run {
        /// Experiment config (flat key = value text).
        #[arg(long)]
        config: PathBuf,
        /// Run a single seed instead of the config's seed list.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: config `out` key, then $DRR_OUT_ROOT/<stem>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override a config key, e.g. --override train.lr=0.01 (repeatable).
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Rerun the same replay learner with ring / reservoir / random /
    /// centroid memory and tabulate A_T, F_T, LTR, per-observe time.
    CompareSamplers {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Render accuracy trends and just-finished-task bars from run
    /// directories into standalone SVG files.
    Plot {
        /// Run directories (each holding accuracy.csv and config.cfg).
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Where to write trend.svg and just_finished.svg (default: .).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a run's rehearsal memory dump.
    DumpMemory {
        /// Run directory holding memory.dump.
        run: PathBuf,
    },
    /// Recompute A_T, F_T, LTR from an accuracy CSV.
    Metrics {
        csv: PathBuf,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            eprint!("{e}");
            std::process::exit(1);
        }
        Err(e) => {
            // --help / --version
            print!("{e}");
            std::process::exit(0);
        }
    };

    let result = match cli.command {
        Command::Run {
            config,
            seed,
            out,
            overrides,
        } => commands::cmd_run(&config, seed, out, &overrides),
        Command::CompareSamplers {
            config,
            out,
            overrides,
        } => commands::cmd_compare_samplers(&config, out, &overrides),
        Command::Plot { runs, out } => commands::cmd_plot(&runs, out),
        Command::DumpMemory { run } => commands::cmd_dump_memory(&run),
        Command::Metrics { csv } => commands::cmd_metrics(&csv),
    };

    if let Err(e) = result {
        eprintln!("error: {e:#}");
        // config/usage problems exit 1, runtime failures exit 2
        let usage = e
            .chain()
            .any(|c| c.to_string().contains("config") || c.to_string().contains("unknown key"));
        std::process::exit(if usage { 1 } else { 2 });
    }
}
