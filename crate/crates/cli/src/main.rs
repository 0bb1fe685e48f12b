mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nestgnn::engine::Preset;

use crate::config::RunConfig;
use crate::error::CliError;

/// Alternative-graph discrete choice models: data preparation, training,
/// grid search, and post-estimation analysis.
#[derive(Debug, Parser)]
#[command(name = "nestgnn", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true, env = "NESTGNN_OUT_DIR")]
    out_dir: Option<PathBuf>,
    /// Print human-readable tables instead of output paths.
    #[arg(long, global = true)]
    pretty: bool,
}

#[derive(Debug, Args)]
pub struct ModelSelection {
    /// Model artifacts, or a grid results file (comma separated).
    #[arg(long, value_delimiter = ',')]
    models: Vec<PathBuf>,
    /// Keep only the first K models.
    #[arg(long)]
    top_k: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Read and validate the data, write the cleaned sample.
    Ingest,
    /// Descriptive statistics and choice shares.
    Summarize,
    /// Train one model.
    Train {
        /// mnl, asu-dnn, nl, highdim-lse, or custom.
        #[arg(long, value_parser = parse_preset)]
        preset: Option<Preset>,
        /// Nest id per alternative, e.g. 0,0,1,1.
        #[arg(long, value_delimiter = ',')]
        nest_ids: Option<Vec<usize>>,
    },
    /// Train and rank every configuration of the grid.
    GridSearch {
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Log-likelihood, accuracy, and F1 of saved models.
    Evaluate {
        #[command(flatten)]
        models: ModelSelection,
    },
    /// Elasticity tables of saved models.
    Elasticity {
        #[command(flatten)]
        models: ModelSelection,
        /// Restrict the table to one variable, e.g. "automobile cost".
        #[arg(long)]
        variable: Option<String>,
    },
    /// Probability and ratio curves along one variable.
    Substitution {
        #[command(flatten)]
        models: ModelSelection,
        #[arg(long)]
        variable: Option<String>,
        /// `lo:hi:n` or a comma-separated list of values.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Curves and elasticities averaged over the top models.
    Ensemble {
        #[command(flatten)]
        models: ModelSelection,
        #[arg(long)]
        variable: Option<String>,
        #[arg(long)]
        grid: Option<String>,
    },
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_")))
        .map_err(|_| format!("unknown preset `{s}`"))
}

const USAGE: &str = "usage: nestgnn <COMMAND> --config <FILE> [OPTIONS]";

fn run(cli: Cli) -> Result<(), CliError> {
    let path = cli
        .common
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage(format!("missing --config\n{USAGE}")))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.common.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &cli.common.out_dir {
        cfg.out_dir = Some(dir.clone());
    }
    if let Command::Train { preset, nest_ids } = &cli.command {
        if preset.is_some() {
            cfg.model.preset = *preset;
            cfg.model.config = None;
        }
        if nest_ids.is_some() {
            cfg.model.nest_ids = nest_ids.clone();
        }
    }
    cfg.validate()?;
    let ctx = commands::Context::new(cfg, cli.common.pretty);
    match cli.command {
        Command::Ingest => commands::ingest(&ctx),
        Command::Summarize => commands::summarize(&ctx),
        Command::Train { .. } => commands::train(&ctx),
        Command::GridSearch { jobs } => commands::grid_search(&ctx, jobs),
        Command::Evaluate { models } => commands::evaluate(&ctx, &models),
        Command::Elasticity { models, variable } => commands::elasticity(&ctx, &models, variable),
        Command::Substitution {
            models,
            variable,
            grid,
        } => commands::substitution(&ctx, &models, variable, grid),
        Command::Ensemble {
            models,
            variable,
            grid,
        } => commands::ensemble(&ctx, &models, variable, grid),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
