use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

mod commands;
mod io;

const DIVISIONS: [&str; 5] = ["0.25", "0.5", "1", "2", "perfect"];

fn vocab_size(s: &str) -> Result<usize, String> {
    match s {
        "170" => Ok(170),
        "26" => Ok(26),
        _ => Err("expected 170 or 26".into()),
    }
}

#[derive(Debug, Parser)]
#[command(name = "chordkit", version, about = "Chord recognition toolkit")]
struct Cli {
    /// Run every stage on one thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a frame classifier on a directory of .lab/.cqtf pairs.
    Train(TrainArgs),
    /// Run a trained model on one feature file.
    Predict(PredictArgs),
    /// Viterbi-smooth a posteriorgram CSV.
    Smooth(SmoothArgs),
    /// Score estimated annotations against references.
    Eval(EvalArgs),
    /// Emit per-song scores, class tables, confusions and error statistics as CSV.
    Report(ReportArgs),
    /// Generate a synthetic progression dataset.
    Synth(SynthArgs),
    /// Pitch-shift a feature file and its labels.
    Augment(AugmentArgs),
    /// Check label alignment and duration for one song.
    CheckAlign(CheckAlignArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Train(_) => "train",
            Command::Predict(_) => "predict",
            Command::Smooth(_) => "smooth",
            Command::Eval(_) => "eval",
            Command::Report(_) => "report",
            Command::Synth(_) => "synth",
            Command::Augment(_) => "augment",
            Command::CheckAlign(_) => "check-align",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Training directory.
    #[arg(long)]
    pub data: PathBuf,
    /// Validation directory.
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Vocabulary size: 170 or 26.
    #[arg(long, default_value_t = 170, value_parser = vocab_size)]
    pub vocab: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Class-weight exponent.
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    /// Chord-loss share of the structured loss.
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Pitch-shift probability per patch.
    #[arg(long = "shift-prob", default_value_t = 0.0)]
    pub shift_prob: f64,
    #[arg(long, default_value_t = 150)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    #[arg(long = "batch-size", default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long = "patch-seconds", default_value_t = 10.0)]
    pub patch_seconds: f64,
    /// logistic or hidden
    #[arg(long, default_value = "logistic", value_parser = ["logistic", "hidden"])]
    pub arch: String,
    #[arg(long = "hidden-units", default_value_t = 128)]
    pub hidden_units: usize,
    /// Frames of context on each side for the hidden architecture.
    #[arg(long, default_value_t = 5)]
    pub context: usize,
    /// Train on beat-pooled features: 0.25, 0.5, 1, 2 or perfect.
    /// Beat times are read from `<song>.beats` next to each song.
    #[arg(long = "beat-division", value_parser = DIVISIONS)]
    pub beat_division: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Smooth with this self-transition probability instead of taking the argmax.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long = "beat-file")]
    pub beat_file: Option<PathBuf>,
    #[arg(long = "beat-division", value_parser = DIVISIONS)]
    pub beat_division: Option<String>,
    /// Labels used for perfect beat intervals.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Calibration table JSON.
    #[arg(long)]
    pub calibration: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SmoothArgs {
    #[arg(long)]
    pub posteriors: PathBuf,
    #[arg(long)]
    pub beta: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Use max-marginal decoding instead of Viterbi.
    #[arg(long)]
    pub marginal: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Reference annotation file or directory.
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// Estimated annotation file or directory.
    #[arg(long)]
    pub est: PathBuf,
    /// acc, root, third, seventh, mirex or majmin
    #[arg(long, default_value = "acc", value_parser = ["acc", "root", "third", "seventh", "mirex", "majmin"])]
    pub metric: String,
    #[arg(long, default_value_t = 170, value_parser = vocab_size)]
    pub vocab: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub est: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 170, value_parser = vocab_size)]
    pub vocab: usize,
    /// Frame hop in seconds for frame-level statistics.
    #[arg(long, default_value_t = chordkit::annotate::DEFAULT_HOP)]
    pub hop: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = chordkit::annotate::DEFAULT_HOP)]
    pub hop: f64,
    /// Renderer noise in dB.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f32,
    /// Song length in seconds.
    #[arg(long, default_value_t = 30.0)]
    pub duration: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct AugmentArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Semitone shifts, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = chordkit::model::SHIFT_SET)]
    pub shift: Vec<i32>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CheckAlignArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Search window in frames.
    #[arg(long, default_value_t = chordkit::annotate::DEFAULT_LAG_WINDOW)]
    pub window: usize,
    /// Allowed duration difference in seconds.
    #[arg(long, default_value_t = 1.0)]
    pub tolerance: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let exec = if cli.sequential {
        chordkit::Execution::Sequential
    } else {
        chordkit::Execution::default()
    };
    let name = cli.command.name();
    let result = match &cli.command {
        Command::Train(a) => commands::train(exec, a),
        Command::Predict(a) => commands::predict(a),
        Command::Smooth(a) => commands::smooth(a),
        Command::Eval(a) => commands::eval(exec, a),
        Command::Report(a) => commands::report(exec, a),
        Command::Synth(a) => commands::synth(exec, a),
        Command::Augment(a) => commands::augment(a),
        Command::CheckAlign(a) => commands::check_align(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let record = serde_json::json!({
                "command": name,
                "error": format!("{err:#}"),
            });
            eprintln!("{record}");
            ExitCode::from(1)
        }
    }
}
