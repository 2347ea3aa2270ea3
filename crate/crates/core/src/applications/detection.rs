use std::io::Write;
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PreError, Result};
use crate::estimator::{fit, FitOptions};
use crate::linalg::logsumexp;
use crate::model::{log_likelihoods, Design, FeatureMap, LogLikelihood, PreProblem, PriorSampleSet};

/// Which constant the reported window score carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreConvention {
    /// `l(delta_hat)` with the delta-independent constant dropped.
    #[default]
    Objective,
    /// `log q_hat(y_q) - l(delta_hat)`, an estimate of the divergence between
    /// the two posteriors. Nonnegative for the fitted PRE objective.
    Divergence,
}

/// Settings shared by every window pair.
#[derive(Debug, Clone)]
pub struct DetectionConfig {
    pub window_len: usize,
    pub stride: usize,
    pub feature: FeatureMap,
    pub likelihood_sigma: f64,
    pub prior_p: Arc<PriorSampleSet>,
    pub prior_q: Arc<PriorSampleSet>,
    pub fit: FitOptions,
    pub convention: ScoreConvention,
    template: OnceLock<PreProblem>,
    prior_delta: OnceLock<Vec<f64>>,
}

impl DetectionConfig {
    pub fn new(
        window_len: usize,
        stride: usize,
        feature: FeatureMap,
        likelihood_sigma: f64,
        prior_p: Arc<PriorSampleSet>,
        prior_q: Arc<PriorSampleSet>,
    ) -> Result<Self> {
        if window_len < 2 {
            return Err(PreError::InvalidInput(format!("window length must be at least 2, got {window_len}")));
        }
        if stride == 0 {
            return Err(PreError::InvalidInput("stride must be at least 1".into()));
        }
        if !(likelihood_sigma > 0.0 && likelihood_sigma.is_finite()) {
            return Err(PreError::InvalidInput(format!(
                "likelihood sigma must be positive, got {likelihood_sigma}"
            )));
        }
        if feature.input_dim() != window_len {
            return Err(PreError::DimensionMismatch {
                context: "feature input dimension",
                expected: window_len,
                found: feature.input_dim(),
            });
        }
        for (set, context) in [(&prior_p, "p-side prior bank"), (&prior_q, "q-side prior bank")] {
            if set.dim() != window_len {
                return Err(PreError::DimensionMismatch {
                    context,
                    expected: window_len,
                    found: set.dim(),
                });
            }
        }
        Ok(Self {
            window_len,
            stride,
            feature,
            likelihood_sigma,
            prior_p,
            prior_q,
            fit: FitOptions::default(),
            convention: ScoreConvention::default(),
            template: OnceLock::new(),
            prior_delta: OnceLock::new(),
        })
    }

    pub fn with_fit_options(mut self, fit: FitOptions) -> Self {
        self.fit = fit;
        self.prior_delta = OnceLock::new();
        self
    }

    pub fn with_convention(mut self, convention: ScoreConvention) -> Self {
        self.convention = convention;
        self
    }

    /// The problem with unit likelihoods; window problems reuse its features.
    fn template(&self) -> Result<&PreProblem> {
        if let Some(t) = self.template.get() {
            return Ok(t);
        }
        let t = PreProblem::new(
            LogLikelihood::Unit,
            LogLikelihood::Unit,
            (*self.prior_p).clone(),
            (*self.prior_q).clone(),
            self.feature,
        )?;
        Ok(self.template.get_or_init(|| t))
    }

    /// Prior-ratio parameter fitted once with unit likelihoods.
    pub fn prior_delta(&self) -> Result<&[f64]> {
        if let Some(d) = self.prior_delta.get() {
            return Ok(d);
        }
        let r = fit(self.template()?, &self.fit)?;
        if !r.converged {
            return Err(PreError::SolverFailure(format!(
                "prior-ratio fit did not converge (gradient norm {:.3e})",
                r.grad_norm
            )));
        }
        Ok(self.prior_delta.get_or_init(|| r.delta_hat))
    }

    fn window_likelihood(&self, y: &[f64]) -> Result<LogLikelihood> {
        if y.len() != self.window_len {
            return Err(PreError::DimensionMismatch {
                context: "detection window",
                expected: self.window_len,
                found: y.len(),
            });
        }
        LogLikelihood::gaussian(y.to_vec(), Design::Identity, self.likelihood_sigma)
    }

    /// Problem for one window pair.
    pub fn window_problem(&self, y_p: &[f64], y_q: &[f64]) -> Result<PreProblem> {
        self.template()?
            .with_likelihoods(self.window_likelihood(y_p)?, self.window_likelihood(y_q)?)
    }

    fn apply_convention(&self, value: f64, problem: &PreProblem) -> f64 {
        match self.convention {
            ScoreConvention::Objective => value,
            ScoreConvention::Divergence => problem.log_evidence_q() - value,
        }
    }
}

/// PRE detection score for one window pair: the fitted objective value.
pub fn pre_score(y_p: &[f64], y_q: &[f64], config: &DetectionConfig) -> Result<f64> {
    let problem = config.window_problem(y_p, y_q)?;
    let r = fit(&problem, &config.fit)?;
    if !r.converged {
        return Err(PreError::SolverFailure(format!(
            "window fit did not converge after {} iterations (gradient norm {:.3e})",
            r.iterations, r.grad_norm
        )));
    }
    Ok(config.apply_convention(r.objective, &problem))
}

/// Plugin detection score: the same objective with the log-ratio fixed to
/// `<delta_prior, f(x)> + log l_p(x) - log l_q(x)`.
pub fn plugin_score(y_p: &[f64], y_q: &[f64], config: &DetectionConfig) -> Result<f64> {
    let delta = config.prior_delta()?;
    let problem = config.window_problem(y_p, y_q)?;
    let (w, _) = crate::model::p_side_weights(&problem);
    let lp_at_q = log_likelihoods(problem.log_lp(), problem.xq())?;
    let lq_at_p = log_likelihoods(problem.log_lq(), problem.xp())?;
    let dot = |m: &nalgebra::DMatrix<f64>, i: usize| -> f64 { m.row(i).iter().zip(delta).map(|(a, b)| a * b).sum() };
    let fp = problem.fp();
    let fq = problem.fq();
    let p_term: f64 = (0..problem.n_p())
        .map(|i| {
            let g = dot(fp, i) + problem.log_lp_values()[i] - lq_at_p[i];
            w.as_slice()[i] * g
        })
        .sum();
    let q_logits: Vec<f64> = (0..problem.n_q()).map(|j| dot(fq, j) + lp_at_q[j]).collect();
    let lse = logsumexp(&q_logits);
    if !lse.is_finite() {
        return Err(PreError::DegenerateEvidence { side: "q" });
    }
    let value = -p_term + lse - (problem.n_q() as f64).ln();
    Ok(config.apply_convention(value, &problem))
}

/// Running scores over a series; failed windows are recorded as `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSeries {
    pub positions: Vec<usize>,
    pub scores: Vec<Option<f64>>,
}

impl DetectionSeries {
    /// CSV with header `position,score`; missing scores are written as `NaN`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "position,score")?;
        for (p, s) in self.positions.iter().zip(&self.scores) {
            match s {
                Some(v) => writeln!(out, "{p},{v:.16e}")?,
                None => writeln!(out, "{p},NaN")?,
            }
        }
        Ok(())
    }
}

/// Window starts `t` with `t + 2 * window_len <= len`.
pub fn window_positions(len: usize, window_len: usize, stride: usize) -> Vec<usize> {
    if len < 2 * window_len {
        return Vec::new();
    }
    (0..=len - 2 * window_len).step_by(stride.max(1)).collect()
}

/// Scores each reference window against the window that immediately follows it.
pub fn sliding_scores(series: &[f64], config: &DetectionConfig) -> Result<DetectionSeries> {
    let w = config.window_len;
    if series.len() < 2 * w {
        return Err(PreError::InvalidInput(format!(
            "series of length {} is shorter than two windows of {w}",
            series.len()
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(PreError::InvalidInput("series contains a non-finite value".into()));
    }
    config.template()?;
    let positions = window_positions(series.len(), w, config.stride);
    let scores = positions
        .par_iter()
        .map(|&t| pre_score(&series[t..t + w], &series[t + w..t + 2 * w], config).ok())
        .collect();
    Ok(DetectionSeries { positions, scores })
}
