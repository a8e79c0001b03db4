mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use popfix::engine::Method;
use popfix::evaluator::EvaluatorConfig;
use popfix::generator::BackendKind;
use popfix::metrics::PassAtKEstimator;

use crate::commands::{MetricsArgs, ValidateArgs};
use crate::config::{CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "popfix", version, args_override_self = true, about = "Population-based program repair experiments")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Evolve,
    Naive,
    Greedy,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Http,
    Scripted,
    Replay,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Unbiased,
    Fraction,
}

#[derive(Subcommand)]
enum Command {
    /// Run a repair method over a dataset and write one report per run.
    Run(Box<RunArgs>),
    /// Aggregate a directory of run reports.
    Metrics {
        reports_dir: PathBuf,
        /// pass@k values to report.
        #[arg(long = "k", value_delimiter = ',', default_values_t = [1usize])]
        ks: Vec<usize>,
        #[arg(long, value_enum, default_value = "unbiased")]
        estimator: EstimatorArg,
        /// Metrics JSON destination; defaults to `<reports_dir>/metrics.json`.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Also write per-step best-fitness traces as CSV.
        #[arg(long)]
        csv_traces: Option<PathBuf>,
    },
    /// Check a dataset, optionally executing every buggy program.
    Validate {
        dataset: PathBuf,
        #[arg(long)]
        execute: bool,
        /// Fail when a buggy program passes every test or none.
        #[arg(long)]
        strict: bool,
        /// Experiment config whose evaluator section is used.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Summarize a recorded exchange log.
    ReplayInspect {
        log: PathBuf,
        /// List every exchange.
        #[arg(long)]
        all: bool,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    /// JSON experiment config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long)]
    runs_per_task: Option<usize>,
    #[arg(long)]
    master_seed: Option<u64>,
    /// Task ids or globs, comma separated.
    #[arg(long, value_delimiter = ',')]
    tasks: Option<Vec<String>>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    templates_dir: Option<PathBuf>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    #[arg(long)]
    script: Option<PathBuf>,
    #[arg(long)]
    endpoint_url: Option<String>,
    #[arg(long)]
    model_name: Option<String>,
    #[arg(long)]
    max_turns: Option<usize>,
    #[arg(long)]
    init_population: Option<usize>,
}

impl RunArgs {
    fn into_config(self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.dataset {
            cfg.dataset = Some(v);
        }
        if let Some(v) = self.output_dir {
            cfg.output_dir = v;
        }
        if let Some(v) = self.method {
            cfg.method = match v {
                MethodArg::Evolve => Method::Evolve,
                MethodArg::Naive => Method::Naive,
                MethodArg::Greedy => Method::Greedy,
            };
        }
        if let Some(v) = self.runs_per_task {
            cfg.runs_per_task = v;
        }
        if let Some(v) = self.master_seed {
            cfg.master_seed = v;
        }
        if let Some(v) = self.tasks {
            cfg.tasks = v;
        }
        if let Some(v) = self.jobs {
            cfg.jobs = v;
        }
        if let Some(v) = self.templates_dir {
            cfg.templates_dir = Some(v);
        }
        if let Some(v) = self.cache_dir {
            cfg.cache_dir = Some(v);
        }
        if let Some(v) = self.backend {
            cfg.backend.backend = match v {
                BackendArg::Http => BackendKind::Http,
                BackendArg::Scripted => BackendKind::Scripted,
                BackendArg::Replay => BackendKind::Replay,
            };
        }
        if let Some(v) = self.script {
            cfg.backend.script_path = Some(v);
        }
        if let Some(v) = self.endpoint_url {
            cfg.backend.endpoint_url = v;
        }
        if let Some(v) = self.model_name {
            cfg.backend.model_name = v;
        }
        if let Some(v) = self.max_turns {
            cfg.engine.max_turns = v;
        }
        if let Some(v) = self.init_population {
            cfg.engine.init_population = v;
        }
        Ok(cfg)
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run(args) => commands::cmd_run(&args.into_config()?),
        Command::Metrics {
            reports_dir,
            ks,
            estimator,
            output,
            csv_traces,
        } => commands::cmd_metrics(&MetricsArgs {
            reports_dir,
            ks,
            estimator: match estimator {
                EstimatorArg::Unbiased => PassAtKEstimator::Unbiased,
                EstimatorArg::Fraction => PassAtKEstimator::Fraction,
            },
            output,
            csv_traces,
        }),
        Command::Validate {
            dataset,
            execute,
            strict,
            config,
        } => {
            let evaluator = match config {
                Some(path) => ExperimentConfig::load(&path)?.evaluator,
                None => EvaluatorConfig::default(),
            };
            commands::cmd_validate(&ValidateArgs {
                dataset,
                execute,
                strict,
                evaluator,
            })
        }
        Command::ReplayInspect { log, all } => commands::cmd_replay_inspect(&log, all),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("popfix: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
