//! The empirical objective, its analytic derivatives, and the convex solver
//! producing `delta_hat`.

mod objective;

pub use objective::{evaluate, gradient, hessian, objective, ObjectiveEval, TiltedObjective};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{PreError, Result};
use crate::linalg::to_rows;
use crate::model::PreProblem;

pub const ARMIJO_C: f64 = 1e-4;
pub const BACKTRACK_SHRINK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 60;
const ROUNDOFF: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Starting point; `None` means the zero vector.
    pub init: Option<Vec<f64>>,
    /// Convergence threshold on the gradient l2 norm.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            init: None,
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

impl FitOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub iteration: usize,
    pub objective: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub delta_hat: Vec<f64>,
    pub objective: f64,
    pub grad_norm: f64,
    pub hessian_at_opt: Vec<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
    pub solver_path: Vec<PathRecord>,
}

impl FitResult {
    pub fn hessian_matrix(&self) -> DMatrix<f64> {
        crate::linalg::from_rows(&self.hessian_at_opt)
    }
}

/// Minimises the empirical objective of `problem` by damped Newton.
pub fn fit(problem: &PreProblem, options: &FitOptions) -> Result<FitResult> {
    minimize(&TiltedObjective::from_problem(problem), options)
}

/// Damped Newton with Armijo backtracking. The Newton system `(H + lambda I) s = -g`
/// starts with `lambda = 0` and raises it through powers of ten until the
/// Cholesky factorisation succeeds.
pub fn minimize(obj: &TiltedObjective<'_>, options: &FitOptions) -> Result<FitResult> {
    if !(options.tol > 0.0) {
        return Err(PreError::InvalidInput(format!("tolerance must be positive, got {}", options.tol)));
    }
    let k = obj.dim();
    let mut delta = match &options.init {
        Some(init) => {
            if init.len() != k {
                return Err(PreError::DimensionMismatch {
                    context: "initial delta",
                    expected: k,
                    found: init.len(),
                });
            }
            if init.iter().any(|v| !v.is_finite()) {
                return Err(PreError::InvalidInput("initial delta must be finite".into()));
            }
            DVector::from_column_slice(init)
        }
        None => DVector::zeros(k),
    };

    let mut path = Vec::new();
    let mut iteration = 0;
    loop {
        let cur = obj.evaluate_full(delta.as_slice(), true)?;
        if !cur.value.is_finite() {
            return Err(PreError::SolverFailure(format!("objective is {} at iteration {iteration}", cur.value)));
        }
        let grad_norm = cur.gradient.norm();
        path.push(PathRecord {
            iteration,
            objective: cur.value,
            grad_norm,
        });
        let hess = cur.hessian.expect("hessian requested");
        let converged = grad_norm <= options.tol;
        if converged || iteration >= options.max_iter {
            return Ok(FitResult {
                delta_hat: delta.iter().copied().collect(),
                objective: cur.value,
                grad_norm,
                hessian_at_opt: to_rows(&hess),
                iterations: iteration,
                converged,
                solver_path: path,
            });
        }

        let step = newton_direction(&hess, &cur.gradient)?;
        let slope = cur.gradient.dot(&step);
        let step_features = obj.features() * &step;

        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACKS {
            let change = obj.change_along(&delta, &cur.log_weights, &step_features, &step, t);
            if !change.is_finite() {
                return Err(PreError::SolverFailure(format!(
                    "non-finite objective during line search at iteration {iteration}"
                )));
            }
            if change <= ARMIJO_C * t * slope {
                accepted = true;
                break;
            }
            // Near the optimum the decrease drops below rounding; accept a step
            // that does not measurably increase the objective but shrinks the gradient.
            if change <= ROUNDOFF * (1.0 + cur.value.abs()) {
                let trial = &delta + &step * t;
                let g = obj.evaluate_full(trial.as_slice(), false)?.gradient.norm();
                if g < grad_norm {
                    accepted = true;
                    break;
                }
            }
            t *= BACKTRACK_SHRINK;
        }
        iteration += 1;
        if !accepted {
            // No decrease is representable along the Newton direction; report as-is.
            let cur = obj.evaluate_full(delta.as_slice(), true)?;
            let grad_norm = cur.gradient.norm();
            return Ok(FitResult {
                delta_hat: delta.iter().copied().collect(),
                objective: cur.value,
                grad_norm,
                hessian_at_opt: to_rows(&cur.hessian.expect("hessian requested")),
                iterations: iteration,
                converged: grad_norm <= options.tol,
                solver_path: path,
            });
        }
        delta += step * t;
    }
}

fn newton_direction(hess: &DMatrix<f64>, grad: &DVector<f64>) -> Result<DVector<f64>> {
    let k = hess.nrows();
    let rhs = -grad;
    let mut lambda = 0.0;
    for exponent in -13..=12 {
        let mut shifted = hess.clone();
        for i in 0..k {
            shifted[(i, i)] += lambda;
        }
        if let Some(chol) = shifted.cholesky() {
            let step = chol.solve(&rhs);
            if step.iter().all(|v| v.is_finite()) {
                return Ok(step);
            }
        }
        lambda = 10f64.powi(exponent + 1);
    }
    Err(PreError::SolverFailure("Newton system could not be regularised".into()))
}

/// Per-feature affine map used by [`fit_standardized`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaling {
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

impl FeatureScaling {
    /// Pooled mean and standard deviation over both feature matrices. Constant
    /// columns keep scale 1.
    pub fn pooled(problem: &PreProblem) -> Self {
        let k = problem.dim();
        let n = (problem.n_p() + problem.n_q()) as f64;
        let mut center = vec![0.0; k];
        let mut scale = vec![1.0; k];
        for c in 0..k {
            let col_p = problem.fp().column(c);
            let col_q = problem.fq().column(c);
            let mean = (col_p.sum() + col_q.sum()) / n;
            let ss: f64 = col_p.iter().chain(col_q.iter()).map(|v| (v - mean).powi(2)).sum();
            let sd = (ss / n).sqrt();
            center[c] = mean;
            if sd > 0.0 && sd.is_finite() {
                scale[c] = sd;
            }
        }
        Self { center, scale }
    }
}

/// Fits on standardised features and maps `delta_hat` back to the original
/// coordinates (`delta_c = delta'_c / scale_c`; the centring is absorbed by the
/// normaliser). The ridge, if any, acts in the standardised coordinates.
pub fn fit_standardized(problem: &PreProblem, options: &FitOptions) -> Result<(FitResult, FeatureScaling)> {
    let scaling = FeatureScaling::pooled(problem);
    let std_fq = DMatrix::from_fn(problem.n_q(), problem.dim(), |r, c| {
        (problem.fq()[(r, c)] - scaling.center[c]) / scaling.scale[c]
    });
    let std_target = DVector::from_fn(problem.dim(), |c, _| {
        (problem.p_moment()[c] - scaling.center[c]) / scaling.scale[c]
    });
    let obj = TiltedObjective::new(&std_fq, problem.log_lq_values(), std_target, problem.ridge());
    let mut std_options = options.clone();
    std_options.init = options
        .init
        .as_ref()
        .map(|d| d.iter().zip(&scaling.scale).map(|(v, s)| v * s).collect());
    let std_fit = minimize(&obj, &std_options)?;

    let delta: Vec<f64> = std_fit
        .delta_hat
        .iter()
        .zip(&scaling.scale)
        .map(|(v, s)| v / s)
        .collect();
    let eval = TiltedObjective::from_problem(problem).evaluate_full(&delta, true)?;
    let grad_norm = eval.gradient.norm();
    Ok((
        FitResult {
            delta_hat: delta,
            objective: eval.value,
            grad_norm,
            hessian_at_opt: to_rows(&eval.hessian.expect("hessian requested")),
            iterations: std_fit.iterations,
            converged: std_fit.converged,
            solver_path: std_fit.solver_path,
        },
        scaling,
    ))
}
