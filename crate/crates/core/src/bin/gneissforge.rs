//! Command-line entry point. Every subcommand reads a JSON pipeline config
//! and prints its run report as JSON on stdout.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 data error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gneissforge::pipeline::{self, PipelineConfig, RunReport};
use gneissforge::Result;

#[derive(Parser)]
#[command(name = "gneissforge", version, about = "Corpus-quality pipeline: dedup, annotate, filter")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact-substring deduplication within byte-balanced shards.
    Dedup(Common),
    /// Add readability, token-ratio, classifier and category annotations.
    Annotate(Common),
    /// Keep documents accepted by the configured ensemble rule.
    Filter(Common),
    /// Train a classifier from `__label__` lines.
    Train(Common),
    /// Pick classifier thresholds for a retention target.
    Calibrate(Common),
    /// Write disjoint seeded random subsets.
    Sample(Common),
    /// Summarize sizes and annotation distributions.
    Stats(Common),
    /// Run the configured stages (default: dedup, annotate, filter).
    Run(Common),
}

#[derive(Args)]
struct Common {
    /// Pipeline config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Recompute annotations that are already present.
    #[arg(long)]
    overwrite: bool,
    /// Worker threads (overrides the config).
    #[arg(long)]
    workers: Option<usize>,
    /// Seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<PipelineConfig> {
        let mut config = PipelineConfig::load(&self.config)?;
        if let Some(w) = self.workers {
            config.workers = Some(w);
        }
        if let Some(s) = self.seed {
            config.seed = s;
        }
        config.validate()?;
        Ok(config)
    }
}

fn execute(command: &Command) -> Result<RunReport> {
    match command {
        Command::Dedup(c) => pipeline::cmd_dedup(&c.load()?),
        Command::Annotate(c) => pipeline::cmd_annotate(&c.load()?, c.overwrite),
        Command::Filter(c) => pipeline::cmd_filter(&c.load()?),
        Command::Train(c) => pipeline::cmd_train(&c.load()?),
        Command::Calibrate(c) => pipeline::cmd_calibrate(&c.load()?),
        Command::Sample(c) => pipeline::cmd_sample(&c.load()?),
        Command::Stats(c) => pipeline::cmd_stats(&c.load()?),
        Command::Run(c) => pipeline::cmd_run(&c.load()?, c.overwrite),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(&cli.command) {
        Ok(report) => {
            for (stage, secs) in &report.timings {
                eprintln!("{stage}: {secs:.3}s");
            }
            println!("{}", report.to_json());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}
