//! `sbart`: fit, predict, cross-validate, simulate and evaluate soft BART
//! models from CSV files.

mod commands;
mod error;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "sbart", version, about = "Soft Bayesian additive regression trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to a training CSV and write a model file.
    Fit(FitArgs),
    /// Predict with a fitted model: posterior mean and credible interval per row.
    Predict(PredictArgs),
    /// K-fold cross-validation over the number of trees.
    Cv(CvArgs),
    /// Generate a synthetic data set and its noiseless truth.
    Simulate(SimulateArgs),
    /// Score predictions against the truth and selected variables against known ones.
    Eval(EvalArgs),
}

/// Options shared by commands that fit models.
#[derive(Args)]
pub struct ModelArgs {
    /// Training CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Name of the response column.
    #[arg(long, default_value = "y")]
    pub response: String,
    /// CSV of column,group rows assigning dummy columns to groups.
    #[arg(long)]
    pub groups: Option<PathBuf>,
    /// Flat key=value file with fit settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Likelihood temperature in (0, 1].
    #[arg(long)]
    pub eta: Option<f64>,
    /// Number of trees.
    #[arg(long)]
    pub trees: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Output model file.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Independent chains run concurrently and pooled.
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    /// Also write the fitted model as JSON.
    #[arg(long)]
    pub export_json: Option<PathBuf>,
    /// Print the summary as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Feature CSV; must contain every training predictor column.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Credible level of the reported interval.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Worker threads for prediction.
    #[arg(long, env = "SBART_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Comma-separated candidate numbers of trees.
    #[arg(long, value_delimiter = ',', default_value = "1,10,50,200")]
    pub t_grid: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Output CSV of per-fold RMSE.
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Kind {
    Friedman,
    Step,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub kind: Kind,
    #[arg(long, default_value_t = 250)]
    pub n: usize,
    #[arg(long, default_value_t = 5)]
    pub p: usize,
    /// Noise standard deviation.
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Weight of the linear terms of the Friedman function.
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV of predictors and response.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Output CSV of the noiseless regression function per row.
    #[arg(long)]
    pub truth: PathBuf,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Predictions CSV written by `predict`.
    #[arg(long, requires = "truth")]
    pub predictions: Option<PathBuf>,
    /// Truth CSV written by `simulate`.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Model file for variable-selection metrics.
    #[arg(long, requires = "truth_vars")]
    pub model: Option<PathBuf>,
    /// Relevant predictors, by column name or 1-based position.
    #[arg(long, value_delimiter = ',', requires = "model")]
    pub truth_vars: Vec<String>,
    #[arg(long)]
    pub json: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { error::EXIT_USAGE as u8 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Predict(a) => commands::predict(a),
        Command::Cv(a) => commands::cv(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Eval(a) => commands::eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
