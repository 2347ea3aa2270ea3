use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{PreError, Result};
use crate::linalg::{logsumexp, symmetrize, to_rows};
use crate::model::{q_logits, PreProblem};

/// The smooth convex function shared by the primal fit and the dual outer stage:
///
/// `g(delta) = -<delta, target> + logsumexp_j(log_base_j + <delta, f_j>) - log n + ridge/2 |delta|^2`.
///
/// With `target = sum_i w_i f(x_p^(i))` and `log_base = log l_q(x_q)` this is the
/// rescaled empirical objective; the dual reuses it with `target = sum_j mu_j f_j`.
#[derive(Debug, Clone)]
pub struct TiltedObjective<'a> {
    features: &'a DMatrix<f64>,
    log_base: &'a [f64],
    target: DVector<f64>,
    ridge: f64,
}

/// Value, gradient and (optionally) Hessian at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveEval {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: Option<Vec<Vec<f64>>>,
}

pub(crate) struct Evaluated {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: Option<DMatrix<f64>>,
    pub log_weights: DVector<f64>,
}

impl<'a> TiltedObjective<'a> {
    pub fn new(features: &'a DMatrix<f64>, log_base: &'a [f64], target: DVector<f64>, ridge: f64) -> Self {
        debug_assert_eq!(features.nrows(), log_base.len());
        debug_assert_eq!(features.ncols(), target.len());
        Self {
            features,
            log_base,
            target,
            ridge,
        }
    }

    pub fn from_problem(problem: &'a PreProblem) -> Self {
        Self::new(
            problem.fq(),
            problem.log_lq_values(),
            problem.p_moment().clone(),
            problem.ridge(),
        )
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        self.features
    }

    pub fn target(&self) -> &DVector<f64> {
        &self.target
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    fn log_n(&self) -> f64 {
        (self.features.nrows() as f64).ln()
    }

    pub fn value(&self, delta: &[f64]) -> Result<f64> {
        let logits = q_logits(self.features, self.log_base, delta)?;
        let d = DVector::from_column_slice(delta);
        let lse = logsumexp(logits.as_slice());
        if !lse.is_finite() {
            return Err(PreError::DegenerateEvidence { side: "q" });
        }
        Ok(-d.dot(&self.target) + lse - self.log_n() + 0.5 * self.ridge * d.norm_squared())
    }

    pub(crate) fn evaluate_full(&self, delta: &[f64], with_hessian: bool) -> Result<Evaluated> {
        let logits = q_logits(self.features, self.log_base, delta)?;
        let lse = logsumexp(logits.as_slice());
        if !lse.is_finite() {
            return Err(PreError::DegenerateEvidence { side: "q" });
        }
        let d = DVector::from_column_slice(delta);
        let log_weights = logits.add_scalar(-lse);
        let v = log_weights.map(f64::exp);
        let mean = self.features.tr_mul(&v);
        let value = -d.dot(&self.target) + lse - self.log_n() + 0.5 * self.ridge * d.norm_squared();
        let gradient = &mean - &self.target + &d * self.ridge;
        let hessian = with_hessian.then(|| {
            let k = self.dim();
            let mut scaled = self.features.clone();
            for (mut row, &vj) in scaled.row_iter_mut().zip(v.iter()) {
                let s = vj.sqrt();
                for (c, x) in row.iter_mut().enumerate() {
                    *x = (*x - mean[c]) * s;
                }
            }
            let mut h = scaled.tr_mul(&scaled);
            for i in 0..k {
                h[(i, i)] += self.ridge;
            }
            symmetrize(&h)
        });
        Ok(Evaluated {
            value,
            gradient,
            hessian,
            log_weights,
        })
    }

    pub fn evaluate(&self, delta: &[f64], with_hessian: bool) -> Result<ObjectiveEval> {
        let e = self.evaluate_full(delta, with_hessian)?;
        Ok(ObjectiveEval {
            value: e.value,
            gradient: e.gradient.iter().copied().collect(),
            hessian: e.hessian.as_ref().map(to_rows),
        })
    }

    /// `g(delta + t * step) - g(delta)` evaluated relative to the current weights,
    /// so the difference keeps precision even when `g` itself is large.
    pub(crate) fn change_along(
        &self,
        delta: &DVector<f64>,
        log_weights: &DVector<f64>,
        step_features: &DVector<f64>,
        step: &DVector<f64>,
        t: f64,
    ) -> f64 {
        let shifted: Vec<f64> = log_weights
            .iter()
            .zip(step_features.iter())
            .map(|(lw, fs)| lw + t * fs)
            .collect();
        let lin = -t * step.dot(&self.target);
        let ridge = 0.5 * self.ridge * (2.0 * t * delta.dot(step) + t * t * step.norm_squared());
        lin + logsumexp(&shifted) + ridge
    }
}

/// `l(delta)`: the rescaled empirical objective with the delta-independent
/// constant `-log q_hat(y_q)` dropped.
pub fn objective(problem: &PreProblem, delta: &[f64]) -> Result<f64> {
    TiltedObjective::from_problem(problem).value(delta)
}

/// `sum_j v_j(delta) f_j - sum_i w_i f_i + ridge * delta`.
pub fn gradient(problem: &PreProblem, delta: &[f64]) -> Result<Vec<f64>> {
    let e = TiltedObjective::from_problem(problem).evaluate_full(delta, false)?;
    Ok(e.gradient.iter().copied().collect())
}

/// The v-weighted feature covariance plus `ridge * I`.
pub fn hessian(problem: &PreProblem, delta: &[f64]) -> Result<DMatrix<f64>> {
    let e = TiltedObjective::from_problem(problem).evaluate_full(delta, true)?;
    Ok(e.hessian.expect("hessian requested"))
}

pub fn evaluate(problem: &PreProblem, delta: &[f64], with_hessian: bool) -> Result<ObjectiveEval> {
    TiltedObjective::from_problem(problem).evaluate(delta, with_hessian)
}
