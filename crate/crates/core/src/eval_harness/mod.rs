//! Accuracy, false-alarm and false-rejection metrics, cross-validation, and
//! the noise, class-imbalance and PMU-placement experiments built on them.

mod cv;
mod imbalance;
mod metrics;
mod noise;
mod pmu;
mod sweep;

pub use cv::{kfold_cv, stratified_folds, stratified_holdout, CvReport};
pub use imbalance::{
    imbalance_experiment, imbalance_split, plan_ratio, ImbalanceResult, ImbalanceSplit, RatioPlan,
    DEFAULT_STABLE_RATIOS, DEFAULT_TEST_SIZE, DEFAULT_TRAIN_SIZE,
};
pub use metrics::{confusion_and_metrics, evaluate, ConfusionMatrix, MetricsReport};
pub use noise::{feature_std, inject_noise, noise_sweep, noise_sweep_model, DEFAULT_NOISE_LEVELS};
pub use pmu::{
    bus_scores, pmu_feature_subset, pmu_study, rank_pmu_buses, reference_schemes, PMUPlan,
};
pub use sweep::{SweepAxis, SweepPoint, SweepResult, CSV_HEADER};
