mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::System;

/// Cuneiform language and dialect identification.
#[derive(Debug, Parser)]
#[command(name = "cuneilid", version, about, propagate_version = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a meta-classifier or GRU model and write the model file
    Train(TrainArgs),
    /// Predict one label per input line
    Predict(PredictArgs),
    /// Score a model on a labelled test file
    Evaluate(EvaluateArgs),
    /// Compare two models on the same labelled test file
    Compare(CompareArgs),
    /// Print the grams of one feature class for every input line
    Featurize(FeaturizeArgs),
    /// Summarize a corpus file
    Describe(DescribeArgs),
    /// Split a labelled corpus into stratified parts
    Split(SplitArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// System to train [config key: system]
    #[arg(long, value_enum)]
    pub system: Option<System>,
    /// Labelled training corpus [config key: train]
    #[arg(long, value_name = "PATH")]
    pub train: Option<PathBuf>,
    /// Labelled development corpus, required for neural [config key: dev]
    #[arg(long, value_name = "PATH")]
    pub dev: Option<PathBuf>,
    /// JSON run configuration; flags take precedence over its values
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Where to write the model file [config key: model]
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
    /// Master random seed [config key: seed, default 0]
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads, 0 for one per core; never changes outputs [config key: workers]
    #[arg(long, value_name = "N")]
    pub workers: Option<usize>,
    /// Neural only: directory receiving one model file per epoch [config key: checkpoint_dir]
    #[arg(long, value_name = "DIR")]
    pub checkpoint_dir: Option<PathBuf>,
    /// Neural only: write "epoch<TAB>dev_error" lines here [config key: dev_curve]
    #[arg(long, value_name = "PATH")]
    pub dev_curve: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model file written by `train`
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    /// One text per line; a leading LABEL<TAB> column is ignored
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,
    /// Where to write one predicted label per non-empty input line
    #[arg(long, value_name = "PATH")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Model file written by `train`
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    /// Labelled test corpus
    #[arg(long, value_name = "PATH")]
    pub test: PathBuf,
    /// Where to write the JSON evaluation report
    #[arg(long, value_name = "PATH")]
    pub report: PathBuf,
    /// Also write the confusion matrix as CSV
    #[arg(long, value_name = "PATH")]
    pub confusion_csv: Option<PathBuf>,
    /// Also write the row-normalized confusion matrix as SVG
    #[arg(long, value_name = "PATH")]
    pub confusion_svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// First model file
    #[arg(long, value_name = "PATH")]
    pub model_a: PathBuf,
    /// Second model file
    #[arg(long, value_name = "PATH")]
    pub model_b: PathBuf,
    /// Labelled test corpus
    #[arg(long, value_name = "PATH")]
    pub test: PathBuf,
    /// Where to write the JSON comparison record
    #[arg(long, value_name = "PATH")]
    pub report: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Contiguous,
    Skip,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    /// One text per line; a leading LABEL<TAB> column is ignored
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,
    /// Gram family
    #[arg(long, value_enum)]
    pub kind: KindArg,
    /// Gram order: 1-5 for contiguous, 2-3 for skip
    #[arg(long, value_name = "N")]
    pub n: usize,
    /// Codepoints skipped between gram elements: 0 for contiguous, 1-3 for skip
    #[arg(long, value_name = "K")]
    pub k: Option<usize>,
    /// Where to write space-separated "(a,b,...)" grams, one input line per line
    #[arg(long, value_name = "PATH")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct DescribeArgs {
    /// Corpus file
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,
    /// Treat every line as an unlabelled text
    #[arg(long)]
    pub unlabelled: bool,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Labelled corpus file
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,
    /// Comma-separated proportions summing to 1, e.g. 0.8,0.1,0.1
    #[arg(long, value_name = "F,F,...", value_delimiter = ',', required = true)]
    pub fractions: Vec<f64>,
    /// Output file for each fraction, in the same order
    #[arg(long = "output", value_name = "PATH", required = true)]
    pub outputs: Vec<PathBuf>,
    /// Shuffle seed
    #[arg(long, value_name = "N", default_value_t = 0)]
    pub seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::Failure::Usage { command, kind, message }) => {
            use clap::CommandFactory;
            let mut cmd = Cli::command();
            cmd.build();
            let sub = cmd.find_subcommand_mut(command).expect("known subcommand");
            sub.error(kind, message).exit()
        }
        Err(commands::Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
