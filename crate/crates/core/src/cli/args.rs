//! Command-line surface of the `tsa` binary.

use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::ghm_boost::{BoostingMode, GHMConfig, TrainingConfig, DEFAULT_Z_BINS};
use crate::transient_sim::{DEFAULT_DT, DEFAULT_HORIZON};

#[derive(Debug, Parser)]
#[command(
    name = "tsa",
    version,
    about = "Transient stability assessment: generate labelled fault data, train and evaluate boosted classifiers",
    args_override_self = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(untagged)]
pub enum Command {
    /// Simulate random fault scenarios and write a labelled dataset CSV.
    Generate(GenerateArgs),
    /// Train a classifier on a dataset CSV and write the model file.
    Train(TrainArgs),
    /// Score a saved model on a dataset, or cross-validate a configuration.
    Eval(EvalArgs),
    /// Accuracy under increasing measurement noise.
    SweepNoise(NoiseArgs),
    /// Accuracy and false-alarm rate as the training set grows more imbalanced.
    SweepImbalance(ImbalanceArgs),
    /// Rank features (and buses) by their share of split gain in a model.
    Importance(ImportanceArgs),
    /// Accuracy using only features observable from chosen PMU buses.
    PmuStudy(PmuArgs),
    /// Score feature rows from a file or stdin.
    Predict(PredictArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Generate(_) => "generate",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::SweepNoise(_) => "sweep-noise",
            Command::SweepImbalance(_) => "sweep-imbalance",
            Command::Importance(_) => "importance",
            Command::PmuStudy(_) => "pmu-study",
            Command::Predict(_) => "predict",
        }
    }

    pub fn common(&self) -> &CommonArgs {
        match self {
            Command::Generate(a) => &a.common,
            Command::Train(a) => &a.common,
            Command::Eval(a) => &a.common,
            Command::SweepNoise(a) => &a.common,
            Command::SweepImbalance(a) => &a.common,
            Command::Importance(a) => &a.common,
            Command::PmuStudy(a) => &a.common,
            Command::Predict(a) => &a.common,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CommonArgs {
    /// Network case file; the bundled 39-bus case when omitted.
    #[arg(long)]
    pub case: Option<PathBuf>,
    /// Directory for reports and default output files.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// key=value file of defaults for any flag of this command; flags given on the command line win.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OnOff {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Plain,
    Ordered,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainingArgs {
    /// Gradient-harmonizing sample weights.
    #[arg(long, value_enum, default_value = "on")]
    pub ghm: OnOff,
    #[arg(long, value_enum, default_value = "plain")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 500)]
    pub iterations: usize,
    #[arg(long, default_value_t = 6)]
    pub depth: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    /// Gradient-modulus bins for GHM weighting.
    #[arg(long, default_value_t = DEFAULT_Z_BINS)]
    pub zbins: usize,
    /// Permutations used by ordered boosting.
    #[arg(long, default_value_t = 4)]
    pub permutations: usize,
    /// Candidate split thresholds per feature.
    #[arg(long, default_value_t = 32)]
    pub borders: usize,
}

impl TrainingArgs {
    pub fn to_config(&self, seed: u64) -> TrainingConfig {
        TrainingConfig {
            n_iterations: self.iterations,
            depth: self.depth,
            learning_rate: self.lr,
            boosting_mode: match self.mode {
                ModeArg::Plain => BoostingMode::Plain,
                ModeArg::Ordered => BoostingMode::Ordered,
            },
            n_permutations: self.permutations,
            ghm: (self.ghm == OnOff::On).then_some(GHMConfig {
                z_bins: self.zbins,
                ..GHMConfig::default()
            }),
            threshold_candidates_per_feature: self.borders,
            min_samples_per_leaf: 1,
            rng_seed: seed,
        }
    }

    /// Short label for comparison tables.
    pub fn label(&self) -> String {
        let ghm = if self.ghm == OnOff::On {
            "GHM"
        } else {
            "NoGHM"
        };
        let mode = match self.mode {
            ModeArg::Plain => "Plain",
            ModeArg::Ordered => "Ordered",
        };
        format!("{ghm}-{mode}")
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub seed: u64,
    /// Number of fault scenarios.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Integration step, seconds.
    #[arg(long, default_value_t = DEFAULT_DT)]
    pub dt: f64,
    /// Simulated time after the fault, seconds.
    #[arg(long, default_value_t = DEFAULT_HORIZON)]
    pub horizon: f64,
    /// Output CSV; `<out>/dataset.csv` when omitted.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Model file to write; `<out>/model.json` when omitted.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Fraction held out (stratified) for a test report; 0 trains on everything.
    #[arg(long, default_value_t = 0.2)]
    pub holdout: f64,
    /// Also write the train and held-out rows as CSV files next to the report.
    #[arg(long, value_enum, default_value = "off")]
    pub save_split: OnOff,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Saved model to score; without it, the training flags are cross-validated.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Required for cross-validation.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Cross-validation folds.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct NoiseArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Saved model to score on noisy copies; without it, each level is cross-validated.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    /// Noise levels in percent of each feature's standard deviation.
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, default_value = "0,1,2,3")]
    pub levels: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ImbalanceArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Stable-to-unstable training ratios.
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, default_value = "1,3,9,19")]
    pub ratios: Vec<f64>,
    #[arg(long, default_value_t = 4000)]
    pub train_size: usize,
    #[arg(long, default_value_t = 1897)]
    pub test_size: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ImportanceArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub model: PathBuf,
    /// Rows printed and written to the ranking.
    #[arg(long, default_value_t = 20)]
    pub top: usize,
    /// Buses in the importance-ranked PMU plan.
    #[arg(long, default_value_t = 5)]
    pub pmu_count: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PmuArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Extra scheme as comma-separated bus ids; repeatable. The four reference schemes always run.
    #[arg(long = "scheme")]
    pub schemes: Vec<String>,
    /// Also study the top buses ranked by this model's importance.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub pmu_count: usize,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PredictArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub model: PathBuf,
    /// Feature rows (comma-separated, or a dataset CSV with header); `-` or omitted reads stdin.
    #[arg(long)]
    pub input: Option<PathBuf>,
}
