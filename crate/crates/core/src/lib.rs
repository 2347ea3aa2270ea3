//! Posterior ratio estimation.
//!
//! Estimates `p(x | y_p) / q(x | y_q)` up to an x-independent constant from two
//! likelihood functions and two sets of prior samples, using the log-linear
//! model `r(x; delta) ∝ exp<delta, f(x)>` fitted by KL minimisation.
//!
//! Modules:
//! - [`model`]: feature maps, log-likelihoods, prior samples, the problem bundle.
//! - [`estimator`]: empirical objective, its derivatives and the Newton solver.
//! - [`inference`]: sandwich covariance, confidence regions, consistency diagnostics.
//! - [`dual`]: the entropy-regularised dual program and its residual certificate.
//! - [`applications`]: latent-signal detection, baselines and local linear extraction.
//! - [`simharness`]: seeded generators and experiment drivers.

pub mod applications;
pub mod dual;
pub mod error;
pub mod estimator;
pub mod inference;
pub mod linalg;
pub mod model;
pub mod simharness;

pub use error::{PreError, Result};
pub use estimator::{fit, FitOptions, FitResult};
pub use model::{FeatureKind, FeatureMap, LogLikelihood, PreProblem, PriorSampleSet, WeightVector};
