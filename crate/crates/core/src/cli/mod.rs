//! Command-line entry points: train, cv, eval, predict, gradcheck and synth.

mod commands;
mod config;
pub mod pipeline;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::{cmd_cv, cmd_eval, cmd_gradcheck, cmd_predict, cmd_synth, cmd_train, CvRow};
pub use config::{DataConfig, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "cbgru",
    version,
    about = "Relation classification with convolutional bidirectional GRUs"
)]
pub struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// JSON configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; overrides the configuration.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write a checkpoint, log and summary.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Stratified k-fold cross-validation on the training corpus.
    Cv {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 5)]
        folds: usize,
    },
    /// Score a checkpoint on an annotated corpus.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Corpus to score; defaults to `data.test` from the configuration.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Pair schema; must match the one stored in the checkpoint.
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Add bootstrap confidence intervals to every metric.
        #[arg(long)]
        ci: bool,
    },
    /// Label every in-schema concept pair of a corpus.
    Predict {
        #[command(flatten)]
        common: Common,
        /// Checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Corpus in the training JSON-lines format; relations are ignored.
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Compare analytic gradients with finite differences.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Perturb one block's analytic gradient (self-test of the checker).
        #[arg(long, hide = true)]
        corrupt: Option<String>,
    },
    /// Write a generated corpus and its schema.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = SynthKind::Clinical)]
        kind: SynthKind,
        /// Sentences to generate.
        #[arg(long, default_value_t = 500)]
        count: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    /// Keyword-separable four-class corpus.
    Overfit,
    /// Clinical-style corpus over the i2b2 schema.
    Clinical,
}

/// Whether all checks passed. Errors carry their own exit code.
pub fn run(cli: Cli) -> crate::Result<bool> {
    match cli.command {
        Command::Train { common } => cmd_train(&common).map(|_| true),
        Command::Cv { common, folds } => cmd_cv(&common, folds).map(|_| true),
        Command::Eval {
            common,
            checkpoint,
            corpus,
            schema,
            ci,
        } => cmd_eval(
            &common,
            &checkpoint,
            corpus.as_deref(),
            schema.as_deref(),
            ci,
        )
        .map(|_| true),
        Command::Predict {
            common,
            checkpoint,
            corpus,
        } => cmd_predict(&common, &checkpoint, &corpus).map(|_| true),
        Command::Gradcheck { common, corrupt } => {
            cmd_gradcheck(&common, corrupt).map(|r| r.passed())
        }
        Command::Synth {
            common,
            kind,
            count,
        } => cmd_synth(&common, kind, count).map(|_| true),
    }
}

/// Parses `args`, runs the command and maps the outcome to an exit code:
/// 0 success, 1 failed check, 2 usage or configuration error.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .try_init();
    match run(cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    }
}
