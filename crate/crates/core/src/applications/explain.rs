use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{PreError, Result};
use crate::estimator::{fit, FitOptions};
use crate::model::{feature_matrix, ClassSide, FeatureMap, LogLikelihood, PreProblem, PriorSampleSet, ProbabilityFn};

/// Norm cap on surrogate logistic coefficients under perfect separation.
pub const SURROGATE_NORM_CAP: f64 = 50.0;

/// Local linear coefficients of the log class-density ratio
/// `log p(x | -1) / p(x | +1)`, with an importance ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearExplanation {
    pub delta: Vec<f64>,
    /// `(index, |delta_index|)`, sorted by magnitude, largest first.
    pub feature_magnitudes: Vec<(usize, f64)>,
    pub intercept_known: bool,
    pub converged: bool,
    pub warning: Option<String>,
}

impl LinearExplanation {
    fn new(delta: Vec<f64>, converged: bool, warning: Option<String>) -> Self {
        let mut feature_magnitudes: Vec<(usize, f64)> = delta.iter().map(|v| v.abs()).enumerate().collect();
        feature_magnitudes.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Self {
            delta,
            feature_magnitudes,
            intercept_known: false,
            converged,
            warning,
        }
    }
}

fn probabilities(blackbox: &ProbabilityFn, x_loc: &PriorSampleSet) -> Result<Vec<f64>> {
    x_loc
        .rows()
        .map(|x| {
            let p = blackbox(x);
            if !(0.0..=1.0).contains(&p) {
                return Err(PreError::InvalidBlackbox { value: p });
            }
            Ok(p)
        })
        .collect()
}

/// Fits the ratio between the negative-class and positive-class likelihoods
/// over the local sample `x_loc`, used as the prior on both sides.
pub fn extract_local_linear(
    blackbox: &ProbabilityFn,
    x_loc: &PriorSampleSet,
    feature: FeatureMap,
    options: &FitOptions,
) -> Result<LinearExplanation> {
    let probs = probabilities(blackbox, x_loc)?;
    let spread = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - probs.iter().copied().fold(f64::INFINITY, f64::min);
    let problem = PreProblem::new(
        LogLikelihood::blackbox(blackbox.clone(), ClassSide::Negative),
        LogLikelihood::blackbox(blackbox.clone(), ClassSide::Positive),
        x_loc.clone(),
        x_loc.clone(),
        feature,
    )?;
    let r = fit(&problem, options)?;
    let warning = if spread <= 1e-9 {
        Some("black-box probabilities are constant over the local sample; no class signal".to_string())
    } else if !r.converged {
        Some(format!("solver stopped after {} iterations without converging", r.iterations))
    } else {
        None
    };
    Ok(LinearExplanation::new(r.delta_hat, r.converged, warning))
}

/// Logistic regression of hard black-box labels (positive when `P(+|x) > 0.5`)
/// on the features, with an intercept. Returns the negated slope so that it
/// shares the sign convention of [`extract_local_linear`].
pub fn surrogate_baseline(
    blackbox: &ProbabilityFn,
    x_loc: &PriorSampleSet,
    feature: FeatureMap,
) -> Result<LinearExplanation> {
    let probs = probabilities(blackbox, x_loc)?;
    let labels: Vec<f64> = probs.iter().map(|&p| if p > 0.5 { 1.0 } else { 0.0 }).collect();
    let f = feature_matrix(&feature, x_loc)?;
    let k = f.ncols();
    let positives = labels.iter().filter(|&&y| y > 0.5).count();
    if positives == 0 || positives == labels.len() {
        return Ok(LinearExplanation::new(
            vec![0.0; k],
            false,
            Some("degenerate: every hard label falls in one class".to_string()),
        ));
    }
    let n = f.nrows();
    let design = DMatrix::from_fn(n, k + 1, |r, c| if c == 0 { 1.0 } else { f[(r, c - 1)] });
    let y = DVector::from_column_slice(&labels);
    let mut beta = DVector::zeros(k + 1);
    let mut converged = false;
    let mut capped = false;
    for _ in 0..100 {
        let eta = &design * &beta;
        let p = eta.map(|e| 1.0 / (1.0 + (-e).exp()));
        let grad = design.tr_mul(&(&y - &p));
        let wdiag = p.map(|pi| (pi * (1.0 - pi)).max(1e-12));
        let mut weighted = design.clone();
        for (mut row, &wi) in weighted.row_iter_mut().zip(wdiag.iter()) {
            row *= wi;
        }
        let info = design.tr_mul(&weighted);
        let Some(step) = info.cholesky().map(|c| c.solve(&grad)) else {
            break;
        };
        beta += &step;
        let slope_norm = beta.rows(1, k).norm();
        if slope_norm > SURROGATE_NORM_CAP {
            beta *= SURROGATE_NORM_CAP / slope_norm;
            capped = true;
            break;
        }
        if step.norm() <= 1e-10 * (1.0 + beta.norm()) {
            converged = true;
            break;
        }
    }
    let slope: Vec<f64> = beta.rows(1, k).iter().map(|b| -b).collect();
    let warning = if capped {
        Some(format!(
            "labels are (nearly) separable; coefficients capped at norm {SURROGATE_NORM_CAP}"
        ))
    } else if !converged {
        Some("logistic regression did not converge".to_string())
    } else {
        None
    };
    Ok(LinearExplanation::new(slope, converged, warning))
}

/// Cosine of the angle between two vectors; 0 when either is zero.
pub fn direction_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}
