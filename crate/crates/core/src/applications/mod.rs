//! Latent-signal detection with its baselines, and local linear extraction
//! from black-box classifiers.

mod baselines;
mod detection;
mod explain;
mod roc;

pub use baselines::{autocorr_distance, fit_ar, leading_subspace, sst_distance, trajectory_matrix, SST_DEFAULT_RANK};
pub use detection::{
    plugin_score, pre_score, sliding_scores, window_positions, DetectionConfig, DetectionSeries, ScoreConvention,
};
pub use explain::{direction_cosine, extract_local_linear, surrogate_baseline, LinearExplanation, SURROGATE_NORM_CAP};
pub use roc::{roc_auc, roc_curve, RocPoint};
