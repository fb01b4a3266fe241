//! `scdtour` command-line driver.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunArgs;

#[derive(Debug, Parser)]
#[command(name = "scdtour", version, about = "Interpretable semantic change detection over ICA axes")]
struct Cli {
    #[command(flatten)]
    run: RunArgs,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Align the periods and fit the joint ICA; write ICA-space embeddings.
    Decompose,
    /// Compute axis importance and weights, and solve the axis tour.
    Tour,
    /// Merge tour-ordered axes into k dimensions.
    Merge,
    /// Write per-target change scores for the configured method.
    Score,
    /// Run the configured method end to end and write a manifest.
    Eval,
    /// Evaluate a grid of methods, k values and lambdas.
    Sweep {
        /// Comma-separated methods; defaults to the configured one.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        /// Comma-separated k values ("full" allowed).
        #[arg(long, value_delimiter = ',')]
        ks: Option<Vec<String>>,
        /// Comma-separated lambdas for scdtour.
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
    },
    /// Top words per axis and per-target most-activated axes.
    Report {
        /// Words listed per axis in the JSON report.
        #[arg(long, default_value_t = 10)]
        words: usize,
    },
    /// Word intruder test items as JSONL.
    WitGen {
        /// Which period's rows to read top words from.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
        period: u8,
        #[arg(long, default_value_t = scdtour::interpret::WIT_RUNS)]
        runs: usize,
    },
    /// Binary change-detection prompts as JSONL.
    PromptsGen {
        #[arg(long, default_value_t = scdtour::interpret::BINARY_SET_SIZE)]
        set_size: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let (cfg, sweep) = match config::resolve(&cli.run) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("config error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let threads = cfg.threads;
    match scdtour::par::with_threads(threads, || commands::run(&cli.command, cfg, sweep)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let config = e.downcast_ref::<scdtour::pipeline::PipelineError>().is_some_and(|p| p.is_config())
                || e.downcast_ref::<commands::UsageError>().is_some();
            ExitCode::from(if config { 2 } else { 1 })
        }
    }
}
