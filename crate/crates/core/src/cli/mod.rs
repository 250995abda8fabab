//! Command-line entry point: describe, compose, export, predict, evaluate
//! and gen-fixture.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 service error.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

pub use commands::{
    composed_path, dataset_path, descriptions_path, predictions_path, prediction_seed, report_path,
    resume_marker_path, scores_path, splits_path, ComposedRow, EvaluationReport, ExportRow,
    PredictionRow, SplitPlan,
};
pub use config::{EvalConfig, LlmConfig, PipelineConfig};

use crate::compose::CombinationMethod;
use crate::corpus::LabelKind;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Service(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Service(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "verbalize", version, about = "Describe audio and facial behaviour as text and classify sentiment")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LabelArg {
    #[value(name = "self")]
    SelfReported,
    Third,
}

/// Flags that override the config file.
#[derive(Debug, Args)]
struct Overrides {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Output directory.
    #[arg(long = "out", global = true)]
    out_dir: Option<PathBuf>,
    /// Modality subset such as `L+A+F` or `A`.
    #[arg(long, global = true)]
    modalities: Option<String>,
    #[arg(long, global = true)]
    method: Option<CombinationMethod>,
    #[arg(long, global = true, value_enum)]
    label: Option<LabelArg>,
    /// Locale TOML file replacing the bundled English one.
    #[arg(long, global = true)]
    locale: Option<PathBuf>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Number of folds.
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    fold_seed: Option<u64>,
    #[arg(long, global = true)]
    runs: Option<usize>,
    /// Base seed for the unclear-answer fallback.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Clean the manifest and describe every utterance.
    Describe,
    /// Combine descriptions into one text per utterance.
    Compose,
    /// Write the labelled dataset and the fold split plan.
    Export,
    /// Query the language model with paragraph prompts.
    Predict {
        /// Only this run (0-based); all runs when omitted.
        #[arg(long)]
        run: Option<usize>,
        /// Serve replies from a local scripted stand-in.
        #[arg(long)]
        stand_in: Option<PathBuf>,
        /// Continue an interrupted run instead of starting over.
        #[arg(long)]
        resume: bool,
    },
    /// Score prediction runs over participant-independent folds.
    Evaluate,
    /// Write the synthetic mini-corpus.
    GenFixture {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 6)]
        participants: usize,
        #[arg(long, default_value_t = 10)]
        utterances: usize,
    },
}

impl Overrides {
    fn resolve(self) -> Result<PipelineConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(v) = self.manifest {
            cfg.manifest = Some(v);
        }
        if let Some(v) = self.out_dir {
            cfg.out_dir = v;
        }
        if let Some(v) = self.modalities {
            cfg.modalities = v;
        }
        if let Some(v) = self.method {
            cfg.method = v;
        }
        if let Some(v) = self.label {
            cfg.label = match v {
                LabelArg::SelfReported => LabelKind::SelfReported,
                LabelArg::Third => LabelKind::Third,
            };
        }
        if let Some(v) = self.locale {
            cfg.locale = Some(v);
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        if let Some(v) = self.k {
            cfg.eval.k = v;
        }
        if let Some(v) = self.fold_seed {
            cfg.eval.fold_seed = v;
        }
        if let Some(v) = self.runs {
            cfg.eval.runs = v;
        }
        if let Some(v) = self.seed {
            cfg.llm.seed = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn execute<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    use clap::error::ErrorKind;
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(CliError::Usage(e.to_string())),
    };
    let command = cli.command;
    let cfg = cli.overrides.resolve()?;
    match command {
        Command::Describe => commands::describe(&cfg),
        Command::Compose => commands::compose(&cfg),
        Command::Export => commands::export(&cfg),
        Command::Predict {
            run,
            stand_in,
            resume,
        } => {
            let mut cfg = cfg;
            if let Some(script) = stand_in {
                cfg.llm.stand_in = Some(script);
            }
            commands::predict(&cfg, run, resume)
        }
        Command::Evaluate => commands::evaluate(&cfg),
        Command::GenFixture {
            dir,
            participants,
            utterances,
        } => commands::gen_fixture(&dir, participants, utterances),
    }
}

/// Runs with the process arguments and returns the exit code.
pub fn run() -> i32 {
    run_with(std::env::args_os())
}

pub fn run_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match execute(args) {
        Ok(()) => 0,
        Err(e) => {
            let text = e.to_string();
            eprintln!("{}", text.trim_end());
            e.exit_code()
        }
    }
}
