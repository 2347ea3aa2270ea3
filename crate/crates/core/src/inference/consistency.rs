use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PreError, Result};
use crate::estimator::TiltedObjective;
use crate::linalg::{min_eigenpair, sym_spectral_norm};
use crate::model::PreProblem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyDiagnostics {
    pub grad_norm_at_ref: f64,
    pub min_eig_over_ball: f64,
    pub weyl_lower_bound: f64,
    pub ball_radius: f64,
    pub ratio_stat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyOptions {
    /// Random interior starts in addition to the center.
    pub n_restarts: usize,
    /// Projected-descent iterations per start.
    pub max_steps: usize,
    pub seed: u64,
}

impl Default for ConsistencyOptions {
    fn default() -> Self {
        Self {
            n_restarts: 8,
            max_steps: 60,
            seed: 0,
        }
    }
}

struct Probe {
    min_eig: f64,
    max_deviation: f64,
}

struct EigenProbe {
    lambda: f64,
    gradient: DVector<f64>,
    hessian: DMatrix<f64>,
}

fn probe(obj: &TiltedObjective<'_>, delta: &DVector<f64>) -> Result<EigenProbe> {
    let e = obj.evaluate_full(delta.as_slice(), true)?;
    let hessian = e.hessian.expect("hessian requested");
    let (lambda, u) = min_eigenpair(&hessian);
    let f = obj.features();
    let v = e.log_weights.map(f64::exp);
    let mean = f.tr_mul(&v);
    let mut gradient = DVector::zeros(f.ncols());
    for (j, row) in f.row_iter().enumerate() {
        let centered = row.transpose() - &mean;
        let proj = u.dot(&centered);
        gradient += centered * (v[j] * proj * proj);
    }
    Ok(EigenProbe {
        lambda,
        gradient,
        hessian,
    })
}

fn project(center: &DVector<f64>, point: DVector<f64>, radius: f64) -> DVector<f64> {
    let offset = &point - center;
    let norm = offset.norm();
    if norm <= radius {
        point
    } else {
        center + offset * (radius / norm)
    }
}

/// Projected gradient descent on `lambda_min(H(delta))` within the ball.
fn descend(
    obj: &TiltedObjective<'_>,
    center: &DVector<f64>,
    h_ref: &DMatrix<f64>,
    start: DVector<f64>,
    radius: f64,
    max_steps: usize,
) -> Result<Probe> {
    let mut current = probe(obj, &start)?;
    let mut point = start;
    let mut out = Probe {
        min_eig: current.lambda,
        max_deviation: sym_spectral_norm(&(&current.hessian - h_ref)),
    };
    let mut step = radius;
    for _ in 0..max_steps {
        let gnorm = current.gradient.norm();
        if gnorm == 0.0 || step < radius * 1e-6 {
            break;
        }
        let candidate = project(center, &point - &current.gradient * (step / gnorm), radius);
        let next = probe(obj, &candidate)?;
        out.max_deviation = out.max_deviation.max(sym_spectral_norm(&(&next.hessian - h_ref)));
        out.min_eig = out.min_eig.min(next.lambda);
        if next.lambda < current.lambda {
            point = candidate;
            current = next;
            step *= 1.5;
        } else {
            step *= 0.5;
        }
    }
    Ok(out)
}

/// Observable quantities behind the consistency conditions: the gradient at
/// `delta_ref`, the smallest Hessian eigenvalue over a ball around it, and the
/// Weyl-type lower bound `lambda_min(H_ref) - max ||H - H_ref||`.
pub fn consistency_diagnostics(
    problem: &PreProblem,
    delta_ref: &[f64],
    radius: f64,
    options: &ConsistencyOptions,
) -> Result<ConsistencyDiagnostics> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(PreError::InvalidInput(format!("ball radius must be positive, got {radius}")));
    }
    let k = problem.dim();
    if delta_ref.len() != k {
        return Err(PreError::DimensionMismatch {
            context: "reference delta",
            expected: k,
            found: delta_ref.len(),
        });
    }
    let obj = TiltedObjective::from_problem(problem);
    let center = DVector::from_column_slice(delta_ref);
    let at_ref = obj.evaluate_full(delta_ref, true)?;
    let grad_norm = at_ref.gradient.norm();
    let h_ref = at_ref.hessian.expect("hessian requested");
    let (lambda_ref, _) = min_eigenpair(&h_ref);

    let mut starts = vec![center.clone()];
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    for _ in 0..options.n_restarts {
        let dir = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = dir.norm();
        let scale = radius * rng.random::<f64>().powf(1.0 / k as f64);
        let offset = if norm > 0.0 { dir * (scale / norm) } else { dir };
        starts.push(&center + offset);
    }
    let probes: Vec<Probe> = starts
        .into_par_iter()
        .map(|s| descend(&obj, &center, &h_ref, s, radius, options.max_steps))
        .collect::<Result<_>>()?;

    let min_eig = probes.iter().map(|p| p.min_eig).fold(lambda_ref, f64::min);
    let max_dev = probes.iter().map(|p| p.max_deviation).fold(0.0, f64::max);
    let n_min = problem.n_p().min(problem.n_q()) as f64;
    Ok(ConsistencyDiagnostics {
        grad_norm_at_ref: grad_norm,
        min_eig_over_ball: min_eig,
        weyl_lower_bound: lambda_ref - max_dev,
        ball_radius: radius,
        ratio_stat: n_min.sqrt() * grad_norm / min_eig,
    })
}
