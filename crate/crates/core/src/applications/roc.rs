use serde::{Deserialize, Serialize};

use crate::error::{PreError, Result};

fn check(scores_pos: &[f64], scores_neg: &[f64]) -> Result<()> {
    if scores_pos.is_empty() || scores_neg.is_empty() {
        return Err(PreError::InvalidInput("ROC needs at least one positive and one negative score".into()));
    }
    if scores_pos.iter().chain(scores_neg).any(|v| v.is_nan()) {
        return Err(PreError::InvalidInput("ROC scores must not be NaN".into()));
    }
    Ok(())
}

/// Mann-Whitney AUC: the fraction of (positive, negative) pairs ranked
/// correctly, ties counting one half.
pub fn roc_auc(scores_pos: &[f64], scores_neg: &[f64]) -> Result<f64> {
    check(scores_pos, scores_neg)?;
    let mut neg = scores_neg.to_vec();
    neg.sort_by(f64::total_cmp);
    let mut total = 0.0;
    for &p in scores_pos {
        let below = neg.partition_point(|&v| v < p);
        let not_above = neg.partition_point(|&v| v <= p);
        total += below as f64 + 0.5 * (not_above - below) as f64;
    }
    Ok(total / (scores_pos.len() as f64 * neg.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC curve for the rule "positive when score >= threshold", one point per
/// distinct score plus the (0, 0) corner.
pub fn roc_curve(scores_pos: &[f64], scores_neg: &[f64]) -> Result<Vec<RocPoint>> {
    check(scores_pos, scores_neg)?;
    let mut thresholds: Vec<f64> = scores_pos.iter().chain(scores_neg).copied().collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let np = scores_pos.len() as f64;
    let nn = scores_neg.len() as f64;
    let mut out = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    for t in thresholds {
        out.push(RocPoint {
            threshold: t,
            fpr: scores_neg.iter().filter(|&&s| s >= t).count() as f64 / nn,
            tpr: scores_pos.iter().filter(|&&s| s >= t).count() as f64 / np,
        });
    }
    Ok(out)
}
