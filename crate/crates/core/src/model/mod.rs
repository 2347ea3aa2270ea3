//! Shared vocabulary: feature maps, log-likelihoods, prior samples, weights and
//! the immutable problem bundle every estimator works on.

mod feature;
mod likelihood;
mod samples;

pub use feature::{autocorrelation, FeatureKind, FeatureMap};
pub use likelihood::{ClassSide, Design, LogLikelihood, ProbabilityFn, PROB_CLAMP};
pub use samples::{read_numeric_csv, read_series_csv, PriorSampleSet};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{PreError, Result};
use crate::linalg::{logsumexp, softmax};

/// Tolerance on `sum(weights) == 1`.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(PreError::InvalidInput("weight vector must be non-empty".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(PreError::InvalidInput("weights must be finite and nonnegative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(PreError::InvalidInput(format!("weights sum to {sum}, not 1")));
        }
        Ok(Self(weights))
    }

    /// Softmax of log-domain logits.
    pub fn from_logits(logits: &[f64], side: &'static str) -> Result<Self> {
        let w = softmax(logits).ok_or(PreError::DegenerateEvidence { side })?;
        Self::new(w)
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.0)
    }
}

/// Evaluates `f` on every row, returning an `n x k` matrix.
pub fn feature_matrix(feature: &FeatureMap, samples: &PriorSampleSet) -> Result<DMatrix<f64>> {
    let k = feature.output_dim();
    let rows: Vec<Vec<f64>> = (0..samples.len())
        .into_par_iter()
        .map(|i| feature.eval(samples.row(i)))
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(samples.len(), k, |i, j| rows[i][j]))
}

/// Evaluates a log-likelihood on every row.
pub fn log_likelihoods(ll: &LogLikelihood, samples: &PriorSampleSet) -> Result<Vec<f64>> {
    if ll.is_unit() {
        return Ok(vec![0.0; samples.len()]);
    }
    (0..samples.len())
        .into_par_iter()
        .map(|i| ll.eval(samples.row(i)))
        .collect()
}

/// Two likelihoods, two prior sample sets and one feature map, with every
/// delta-independent quantity cached at construction.
#[derive(Debug, Clone)]
pub struct PreProblem {
    log_lp: LogLikelihood,
    log_lq: LogLikelihood,
    xp: PriorSampleSet,
    xq: PriorSampleSet,
    feature: FeatureMap,
    ridge: f64,
    fp: DMatrix<f64>,
    fq: DMatrix<f64>,
    log_lp_vals: Vec<f64>,
    log_lq_vals: Vec<f64>,
    p_weights: WeightVector,
    log_evidence_p: f64,
    p_moment: DVector<f64>,
}

impl PreProblem {
    pub fn new(
        log_lp: LogLikelihood,
        log_lq: LogLikelihood,
        xp: PriorSampleSet,
        xq: PriorSampleSet,
        feature: FeatureMap,
    ) -> Result<Self> {
        Self::with_ridge(log_lp, log_lq, xp, xq, feature, 0.0)
    }

    pub fn with_ridge(
        log_lp: LogLikelihood,
        log_lq: LogLikelihood,
        xp: PriorSampleSet,
        xq: PriorSampleSet,
        feature: FeatureMap,
        ridge: f64,
    ) -> Result<Self> {
        if !(ridge >= 0.0 && ridge.is_finite()) {
            return Err(PreError::InvalidInput(format!("ridge must be nonnegative, got {ridge}")));
        }
        for (set, context) in [(&xp, "p-side prior samples"), (&xq, "q-side prior samples")] {
            if set.dim() != feature.input_dim() {
                return Err(PreError::DimensionMismatch {
                    context,
                    expected: feature.input_dim(),
                    found: set.dim(),
                });
            }
        }
        for (ll, context) in [(&log_lp, "p-side likelihood"), (&log_lq, "q-side likelihood")] {
            if let Some(d) = ll.latent_dim() {
                if d != feature.input_dim() {
                    return Err(PreError::DimensionMismatch {
                        context,
                        expected: feature.input_dim(),
                        found: d,
                    });
                }
            }
        }
        let fp = feature_matrix(&feature, &xp)?;
        let fq = feature_matrix(&feature, &xq)?;
        let log_lp_vals = log_likelihoods(&log_lp, &xp)?;
        let log_lq_vals = log_likelihoods(&log_lq, &xq)?;
        let p_weights = WeightVector::from_logits(&log_lp_vals, "p")?;
        let log_evidence_p = logsumexp(&log_lp_vals) - (xp.len() as f64).ln();
        let p_moment = fp.tr_mul(&p_weights.to_dvector());
        Ok(Self {
            log_lp,
            log_lq,
            xp,
            xq,
            feature,
            ridge,
            fp,
            fq,
            log_lp_vals,
            log_lq_vals,
            p_weights,
            log_evidence_p,
            p_moment,
        })
    }

    pub fn log_lp(&self) -> &LogLikelihood {
        &self.log_lp
    }

    pub fn log_lq(&self) -> &LogLikelihood {
        &self.log_lq
    }

    pub fn xp(&self) -> &PriorSampleSet {
        &self.xp
    }

    pub fn xq(&self) -> &PriorSampleSet {
        &self.xq
    }

    pub fn feature(&self) -> &FeatureMap {
        &self.feature
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn n_p(&self) -> usize {
        self.xp.len()
    }

    pub fn n_q(&self) -> usize {
        self.xq.len()
    }

    /// Number of features `k`.
    pub fn dim(&self) -> usize {
        self.feature.output_dim()
    }

    /// `F_p`, one feature row per p-side sample.
    pub fn fp(&self) -> &DMatrix<f64> {
        &self.fp
    }

    pub fn fq(&self) -> &DMatrix<f64> {
        &self.fq
    }

    pub fn log_lp_values(&self) -> &[f64] {
        &self.log_lp_vals
    }

    pub fn log_lq_values(&self) -> &[f64] {
        &self.log_lq_vals
    }

    /// `sum_i w_i f(x_p^(i))`, the posterior feature mean on the p side.
    pub fn p_moment(&self) -> &DVector<f64> {
        &self.p_moment
    }

    /// `log p_hat(y_p) = logsumexp(log l_p) - log n_p`.
    pub fn log_evidence_p(&self) -> f64 {
        self.log_evidence_p
    }

    /// `log q_hat(y_q)` computed the same way on the q side.
    pub fn log_evidence_q(&self) -> f64 {
        logsumexp(&self.log_lq_vals) - (self.n_q() as f64).ln()
    }

    /// Same samples and features with new likelihoods; the feature matrices are reused.
    pub fn with_likelihoods(&self, log_lp: LogLikelihood, log_lq: LogLikelihood) -> Result<Self> {
        let d = self.feature.input_dim();
        for (ll, context) in [(&log_lp, "p-side likelihood"), (&log_lq, "q-side likelihood")] {
            if let Some(found) = ll.latent_dim() {
                if found != d {
                    return Err(PreError::DimensionMismatch {
                        context,
                        expected: d,
                        found,
                    });
                }
            }
        }
        let log_lp_vals = log_likelihoods(&log_lp, &self.xp)?;
        let log_lq_vals = log_likelihoods(&log_lq, &self.xq)?;
        let p_weights = WeightVector::from_logits(&log_lp_vals, "p")?;
        let log_evidence_p = logsumexp(&log_lp_vals) - (self.xp.len() as f64).ln();
        let p_moment = self.fp.tr_mul(&p_weights.to_dvector());
        Ok(Self {
            log_lp,
            log_lq,
            xp: self.xp.clone(),
            xq: self.xq.clone(),
            feature: self.feature,
            ridge: self.ridge,
            fp: self.fp.clone(),
            fq: self.fq.clone(),
            log_lp_vals,
            log_lq_vals,
            p_weights,
            log_evidence_p,
            p_moment,
        })
    }

    /// Same problem with a different ridge, sharing nothing mutable.
    pub fn with_ridge_value(&self, ridge: f64) -> Result<Self> {
        if !(ridge >= 0.0 && ridge.is_finite()) {
            return Err(PreError::InvalidInput(format!("ridge must be nonnegative, got {ridge}")));
        }
        let mut out = self.clone();
        out.ridge = ridge;
        Ok(out)
    }
}

/// `w_i = softmax_i(log l_p(x_p^(i)))` and `log p_hat(y_p)`.
pub fn p_side_weights(problem: &PreProblem) -> (WeightVector, f64) {
    (problem.p_weights.clone(), problem.log_evidence_p)
}

/// `v_j(delta) = softmax_j(log l_q(x_q^(j)) + <delta, f(x_q^(j))>)`.
pub fn q_side_weights(problem: &PreProblem, delta: &[f64]) -> Result<WeightVector> {
    let logits = q_logits(problem.fq(), problem.log_lq_values(), delta)?;
    WeightVector::from_logits(logits.as_slice(), "q")
}

pub(crate) fn q_logits(fq: &DMatrix<f64>, log_base: &[f64], delta: &[f64]) -> Result<DVector<f64>> {
    if delta.len() != fq.ncols() {
        return Err(PreError::DimensionMismatch {
            context: "delta",
            expected: fq.ncols(),
            found: delta.len(),
        });
    }
    if delta.iter().any(|v| !v.is_finite()) {
        return Err(PreError::InvalidInput("delta contains a non-finite value".into()));
    }
    let d = DVector::from_column_slice(delta);
    Ok(fq * d + DVector::from_column_slice(log_base))
}
