//! Gradient-boosted oblivious trees for binary classification, with optional
//! gradient-harmonizing sample weights and ordered boosting.

mod ensemble;
mod ghm;
mod loss;
mod persist;
mod tree;

pub use ensemble::{
    feature_importance, fit, predict_proba, BoostingMode, Ensemble, FeatureImportanceReport,
    TrainingConfig, TrainingMeta,
};
pub use ghm::{
    bin_of, ghm_weights, gradient_stats, harmonized_loss, GHMConfig, GradientStats, DEFAULT_Z_BINS,
};
pub use loss::{ce_loss, gradient_modulus, mean_loss, residual, sigmoid, PROB_CLAMP};
pub use persist::{load_model, model_from_str, model_to_string, save_model, FORMAT_VERSION};
pub use tree::{
    build_oblivious_tree, ObliviousTree, QuantizedFeatures, TreeParams, MAX_BORDERS, MAX_DEPTH,
};
