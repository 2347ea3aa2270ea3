//! Seeded generators and experiment drivers. Every random draw comes from a
//! stream keyed by `(master seed, index, role)`, so outputs do not depend on
//! execution order or thread count.

mod experiments;
mod generators;
pub mod rng;

pub use experiments::{
    mean_sd, run_consistency_experiment, run_detection_experiment, run_experiment, run_normality_experiment,
    ConsistencyReport, ConsistencyRow, ConsistencyScenario, DetectionReport, DetectionRun, DetectionScenario,
    ExperimentReport, ExperimentSpec, MethodRoc, NormalityReport, NormalityScenario, Orientation, Scenario,
    DETECTION_METHODS,
};
pub use generators::{gen_ar_sequence, gen_prior_bank, normal_vector, standard_normal_samples, ArSequence, ArSettings};
