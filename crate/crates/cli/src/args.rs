//! Command-line surface. Every argument struct is also serializable so a
//! run manifest can carry the fully resolved command and replay it.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mcseg_core::trainer::{LossMode, Strategy};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "mcseg", version, about = "Multi-channel echo image segmentation pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    /// Generate a seeded phantom dataset.
    Synth(SynthArgs),
    /// Reduce a volume's channels with PCA and normalize to [0, 255].
    Pca(PcaArgs),
    /// Train a network on a dataset and write checkpoints and a loss curve.
    Train(TrainArgs),
    /// Segment a volume with a checkpoint.
    Predict(PredictArgs),
    /// Score a prediction against ground truth.
    Eval(EvalArgs),
    /// Classical baselines.
    #[command(subcommand)]
    Baseline(BaselineCommand),
    /// Synthesize (optionally), reduce, train, predict and evaluate in one run.
    Pipeline(PipelineArgs),
    /// Time network inference against the KNN scan.
    Bench(BenchArgs),
    /// Re-run a command from its run manifest.
    #[serde(skip)]
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum BaselineCommand {
    /// Nearest class median under cosine similarity.
    Knn(KnnArgs),
    /// Fuzzy c-means clustering of one volume.
    Fcm(FcmArgs),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct OutArgs {
    /// Output directory; every file of the run lands here.
    #[arg(long)]
    pub out: PathBuf,
    /// Write into an existing non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct PhantomArgs {
    /// Number of samples; the last one is the test sample.
    #[arg(long, default_value_t = 6)]
    pub n: usize,
    #[arg(long, default_value_t = 128)]
    pub height: usize,
    #[arg(long, default_value_t = 80)]
    pub width: usize,
    /// Standard deviation of the additive Gaussian noise.
    #[arg(long, default_value_t = 200.0)]
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub phantom: PhantomArgs,
    /// Master seed; per-sample seeds are derived from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct PcaArgs {
    /// Input volume (.mcv).
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Components kept.
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Keep raw projections instead of mapping them onto [0, 255].
    #[arg(long)]
    pub no_normalize: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyArg {
    FullyBp,
    IgnoreBound,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::FullyBp => Strategy::FullyBp,
            StrategyArg::IgnoreBound => Strategy::IgnoreBound,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyChoice {
    FullyBp,
    IgnoreBound,
    Both,
}

impl StrategyChoice {
    pub fn strategies(self) -> Vec<Strategy> {
        match self {
            StrategyChoice::FullyBp => vec![Strategy::FullyBp],
            StrategyChoice::IgnoreBound => vec![Strategy::IgnoreBound],
            StrategyChoice::Both => vec![Strategy::FullyBp, Strategy::IgnoreBound],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossModeArg {
    Sum,
    Mean,
}

impl From<LossModeArg> for LossMode {
    fn from(m: LossModeArg) -> Self {
        match m {
            LossModeArg::Sum => LossMode::Sum,
            LossModeArg::Mean => LossMode::Mean,
        }
    }
}

/// Network and optimizer settings shared by `train` and `pipeline`.
/// Unset optimizer values fall back to the defaults, or to the
/// `--classic` values when that flag is given.
#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TrainOpts {
    /// Network preset: tiny, small or full.
    #[arg(long, default_value = "tiny")]
    pub preset: String,
    #[arg(long, default_value_t = 1000)]
    pub iters: u64,
    /// Summed loss, lr 1e-14, momentum 0.99, weight decay 5e-4, no clipping.
    #[arg(long)]
    pub classic: bool,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long, value_enum)]
    pub loss_mode: Option<LossModeArg>,
    /// Gradient L2 norm cap.
    #[arg(long, conflicts_with = "no_clip")]
    pub clip_norm: Option<f64>,
    /// Disable gradient clipping.
    #[arg(long)]
    pub no_clip: bool,
    /// Record train and test loss every this many iterations.
    #[arg(long, default_value_t = 50)]
    pub eval_every: u64,
    /// Iterations at which to checkpoint; defaults to 20%, 50% and 100% of
    /// `--iters`.
    #[arg(long, value_delimiter = ',')]
    pub checkpoints: Option<Vec<u64>>,
    /// Width of the ignored band around region junctions (ignore-bound).
    #[arg(long, default_value_t = 1)]
    pub band_width: usize,
    /// PCA components fed to the network.
    #[arg(long, default_value_t = 3)]
    pub pca_k: usize,
    /// Seed for initialization and sample order.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    /// Dataset directory written by `synth`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "ignore-bound")]
    pub strategy: StrategyArg,
    #[command(flatten)]
    #[serde(flatten)]
    pub train: TrainOpts,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct PredictArgs {
    /// Checkpoint directory.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Volume to segment. Raw volumes are reduced with PCA to the network's
    /// input channel count first.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    /// Ground-truth label map (.mcv).
    #[arg(long)]
    pub gt: PathBuf,
    /// Predicted label map (.mcv).
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long, default_value_t = 6)]
    pub classes: usize,
    /// Class left out of the main-tissue averages.
    #[arg(long, default_value_t = 0)]
    pub background: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct KnnArgs {
    /// Dataset directory; medians come from the training samples and the
    /// test sample is segmented.
    #[arg(long)]
    pub data: PathBuf,
    /// Pick the least similar median instead of the most similar one.
    #[arg(long)]
    pub farthest: bool,
    #[arg(long, default_value_t = 3)]
    pub pca_k: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct FcmArgs {
    /// Volume to cluster (.mcv).
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 6)]
    pub clusters: usize,
    #[arg(long, default_value_t = 2.0)]
    pub fuzzifier: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 300)]
    pub max_iter: usize,
    /// Reduce to this many PCA components first; 0 clusters raw channels.
    #[arg(long, default_value_t = 3)]
    pub pca_k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct PipelineArgs {
    /// Existing dataset directory; when omitted a dataset is synthesized
    /// under `<out>/data` from the phantom options and `--seed`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub phantom: PhantomArgs,
    #[arg(long, value_enum, default_value = "both")]
    pub strategy: StrategyChoice,
    #[command(flatten)]
    #[serde(flatten)]
    pub train: TrainOpts,
    /// Run the KNN baseline with the least-similar rule.
    #[arg(long)]
    pub farthest: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct BenchArgs {
    /// Checkpoint directory.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset directory: the test sample is timed and the training
    /// samples provide the KNN medians.
    #[arg(long)]
    pub data: PathBuf,
    /// Timed repetitions per method.
    #[arg(long, default_value_t = 10)]
    pub runs: usize,
    /// Also time a freshly initialized full-preset network on the same
    /// input; the speed comparison then uses it.
    #[arg(long)]
    pub full: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// Run manifest to replay.
    pub manifest: PathBuf,
    /// Write to this directory instead of the recorded one.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Pca(_) => "pca",
            Command::Train(_) => "train",
            Command::Predict(_) => "predict",
            Command::Eval(_) => "eval",
            Command::Baseline(BaselineCommand::Knn(_)) => "baseline knn",
            Command::Baseline(BaselineCommand::Fcm(_)) => "baseline fcm",
            Command::Pipeline(_) => "pipeline",
            Command::Bench(_) => "bench",
            Command::Replay(_) => "replay",
        }
    }

    pub fn out_mut(&mut self) -> Option<&mut OutArgs> {
        match self {
            Command::Synth(a) => Some(&mut a.out),
            Command::Pca(a) => Some(&mut a.out),
            Command::Train(a) => Some(&mut a.out),
            Command::Predict(a) => Some(&mut a.out),
            Command::Eval(a) => Some(&mut a.out),
            Command::Baseline(BaselineCommand::Knn(a)) => Some(&mut a.out),
            Command::Baseline(BaselineCommand::Fcm(a)) => Some(&mut a.out),
            Command::Pipeline(a) => Some(&mut a.out),
            Command::Bench(a) => Some(&mut a.out),
            Command::Replay(_) => None,
        }
    }
}
