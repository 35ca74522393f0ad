//! `hagp`: command-line client of the hagp service.
//!
//! Without `--server` every command starts a private in-process service on
//! a loopback port and talks to it over HTTP.

mod commands;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use hagp_core::gp::Engine;

#[derive(Parser, Debug)]
#[command(name = "hagp", version, about = "Hierarchical additive Gaussian-process models on grid data")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Global {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the configured engine: structured or dense.
    #[arg(long, global = true)]
    pub engine: Option<Engine>,
    /// Worker threads of the in-process service.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Base URL of a running service, e.g. http://127.0.0.1:8080.
    #[arg(long, global = true)]
    pub server: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ingest the input CSV and write the grid and an ingestion report.
    Ingest,
    /// Ingest, apply the daylight-saving shift if configured, impute missing values.
    Impute,
    /// Fit one model and write its export.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        /// Model name from the configuration; the first model by default.
        #[arg(long)]
        model: Option<String>,
        /// Include the weight vector in the export.
        #[arg(long)]
        with_w: bool,
    },
    /// Fit every configured model and write the comparison table.
    Compare {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        with_w: bool,
    },
    /// Write per-effect posterior tables.
    Effects {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        source: ModelSource,
        /// Effect request such as `3+1:3@station=KC1`; repeatable. Replaces the configured list.
        #[arg(long = "request")]
        requests: Vec<String>,
        /// Add pointwise posterior variances.
        #[arg(long)]
        variance: bool,
    },
    /// Posterior mean and variance on the training grid or at given points.
    Predict {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        source: ModelSource,
        /// CSV of query inputs with columns `<dimension>_x<k>`.
        #[arg(long)]
        points: Option<PathBuf>,
        /// Add the noise variance.
        #[arg(long)]
        include_noise: bool,
    },
    /// Time structured against dense evaluation on synthetic grids.
    Bench {
        /// Comma-separated grid shapes.
        #[arg(long, default_value = "4x5x6,59x147x24")]
        sizes: String,
        #[arg(long, default_value = "model4")]
        preset: String,
        /// Skip the dense arm.
        #[arg(long)]
        no_dense: bool,
    },
    /// Run the service in the foreground.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
}

#[derive(Args, Debug, Clone, Default)]
pub struct DataArgs {
    /// Use a serialized grid (as written by `ingest` or `impute`) instead of the configured input.
    #[arg(long)]
    pub grid: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ModelSource {
    /// Model name from the configuration; the effects model or the first by default.
    #[arg(long)]
    pub model: Option<String>,
    /// Use an exported model instead of fitting.
    #[arg(long)]
    pub model_file: Option<PathBuf>,
}

fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into());
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    let runtime = match tokio::runtime::Runtime::new().context("cannot start the async runtime") {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::FAILURE;
        }
    };
    match runtime.block_on(run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

async fn run(cli: Cli) -> Result<()> {
    let g = cli.global;
    match cli.command {
        Command::Serve { addr } => commands::serve(&addr).await,
        Command::Bench { sizes, preset, no_dense } => commands::bench(&g, &sizes, &preset, !no_dense).await,
        Command::Ingest => commands::ingest(&g).await,
        Command::Impute => commands::impute(&g).await,
        Command::Fit { data, model, with_w } => commands::fit(&g, &data, model.as_deref(), with_w).await,
        Command::Compare { data, with_w } => commands::compare(&g, &data, with_w).await,
        Command::Effects { data, source, requests, variance } => commands::effects(&g, &data, &source, requests, variance).await,
        Command::Predict { data, source, points, include_noise } => {
            commands::predict(&g, &data, &source, points.as_deref(), include_noise).await
        }
    }
}
