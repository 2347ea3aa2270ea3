//! Sandwich covariance of `delta_hat`, confidence regions, and numerical checks
//! of the consistency conditions.

mod consistency;

pub use consistency::{consistency_diagnostics, ConsistencyDiagnostics, ConsistencyOptions};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::gamma_lr;

use crate::error::{PreError, Result};
use crate::estimator::FitResult;
use crate::linalg::{sym_eigen_sorted, symmetrize, to_rows};
use crate::model::{q_side_weights, PreProblem};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959964;
/// Information matrices with a larger condition number are rejected.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticReport {
    pub sigma: Vec<Vec<f64>>,
    pub sigma_p: Vec<Vec<f64>>,
    pub sigma_q: Vec<Vec<f64>>,
    pub ratio_np_nq: f64,
    pub avar: Vec<Vec<f64>>,
    pub cov_delta: Vec<Vec<f64>>,
    pub marginal_ci95: Vec<(f64, f64)>,
}

/// Plug-in sandwich covariance at `fit.delta_hat`.
pub fn asymptotic_report(problem: &PreProblem, fit: &FitResult) -> Result<AsymptoticReport> {
    let k = problem.dim();
    if fit.delta_hat.len() != k {
        return Err(PreError::DimensionMismatch {
            context: "fit result",
            expected: k,
            found: fit.delta_hat.len(),
        });
    }
    if !fit.converged {
        return Err(PreError::SolverFailure(
            "asymptotic covariance requires a converged fit".into(),
        ));
    }
    let delta = &fit.delta_hat;
    let sigma = crate::estimator::hessian(problem, delta)? - DMatrix::identity(k, k) * problem.ridge();
    let sigma = symmetrize(&sigma);

    let (w, _) = crate::model::p_side_weights(problem);
    let v = q_side_weights(problem, delta)?;
    let sigma_p = scaled_covariance(problem.fp(), w.as_slice());
    let sigma_q = scaled_covariance(problem.fq(), v.as_slice());

    let sigma_inv = checked_inverse(&sigma)?;
    let ratio = problem.n_p() as f64 / problem.n_q() as f64;
    let middle = &sigma_p + &sigma_q * ratio;
    let avar = symmetrize(&(&sigma_inv * middle * &sigma_inv));
    let cov = &avar / problem.n_p() as f64;
    let ci = (0..k)
        .map(|i| {
            let half = Z95 * cov[(i, i)].max(0.0).sqrt();
            (delta[i] - half, delta[i] + half)
        })
        .collect();
    Ok(AsymptoticReport {
        sigma: to_rows(&sigma),
        sigma_p: to_rows(&sigma_p),
        sigma_q: to_rows(&sigma_q),
        ratio_np_nq: ratio,
        avar: to_rows(&avar),
        cov_delta: to_rows(&cov),
        marginal_ci95: ci,
    })
}

/// Covariance of the rows `n * weight_i * f_i` under uniform `1/n` averaging.
fn scaled_covariance(features: &DMatrix<f64>, weights: &[f64]) -> DMatrix<f64> {
    let n = features.nrows();
    let nf = n as f64;
    let mut scaled = features.clone();
    for (mut row, &w) in scaled.row_iter_mut().zip(weights) {
        row *= nf * w;
    }
    let mean = scaled.row_mean();
    for mut row in scaled.row_iter_mut() {
        row -= &mean;
    }
    symmetrize(&(scaled.tr_mul(&scaled) / nf))
}

/// Inverse of a symmetric positive definite matrix, refusing ill-conditioned input.
pub fn checked_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (values, vectors) = sym_eigen_sorted(m);
    let lo = values[0];
    let hi = values[values.len() - 1];
    if !(lo > 0.0) || !(hi / lo <= MAX_CONDITION) {
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        return Err(PreError::SingularInformation { condition });
    }
    let inv_diag = DMatrix::from_diagonal(&values.map(|v| 1.0 / v));
    Ok(symmetrize(&(&vectors * inv_diag * vectors.transpose())))
}

/// Quantile of the chi-squared distribution with `dof` degrees of freedom, by
/// bisection on the regularised lower incomplete gamma function.
pub fn chi2_quantile(dof: usize, level: f64) -> Result<f64> {
    if dof == 0 || !(level > 0.0 && level < 1.0) {
        return Err(PreError::InvalidInput(format!(
            "chi-squared quantile needs dof >= 1 and level in (0, 1), got dof={dof}, level={level}"
        )));
    }
    let a = dof as f64 / 2.0;
    let cdf = |x: f64| gamma_lr(a, x / 2.0);
    let mut lo = 0.0;
    let mut hi = dof as f64 + 10.0;
    while cdf(hi) < level {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < level {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Squared Mahalanobis distances of `points` from `center` under `cov`.
pub fn mahalanobis_sq(points: &[Vec<f64>], center: &[f64], cov: &DMatrix<f64>) -> Result<Vec<f64>> {
    let k = center.len();
    if cov.nrows() != k || cov.ncols() != k {
        return Err(PreError::DimensionMismatch {
            context: "covariance",
            expected: k,
            found: cov.nrows(),
        });
    }
    let chol = cov
        .clone()
        .cholesky()
        .ok_or(PreError::SingularInformation { condition: f64::INFINITY })?;
    checked_inverse(cov)?;
    let c = DVector::from_column_slice(center);
    points
        .iter()
        .map(|p| {
            if p.len() != k {
                return Err(PreError::DimensionMismatch {
                    context: "ellipse point",
                    expected: k,
                    found: p.len(),
                });
            }
            let diff = DVector::from_column_slice(p) - &c;
            let z = chol.l().solve_lower_triangular(&diff).expect("cholesky factor is nonsingular");
            Ok(z.norm_squared())
        })
        .collect()
}

/// Whether `point` lies outside the `level` confidence ellipse.
pub fn outside_ellipse(point: &[f64], center: &[f64], cov: &DMatrix<f64>, level: f64) -> Result<bool> {
    let q = chi2_quantile(center.len(), level)?;
    Ok(mahalanobis_sq(&[point.to_vec()], center, cov)?[0] > q)
}

/// Fraction of points outside the `level` confidence ellipse.
pub fn ellipse_coverage(points: &[Vec<f64>], center: &[f64], cov: &DMatrix<f64>, level: f64) -> Result<f64> {
    if points.is_empty() {
        return Err(PreError::InvalidInput("no points to test".into()));
    }
    let q = chi2_quantile(center.len(), level)?;
    let d2 = mahalanobis_sq(points, center, cov)?;
    Ok(d2.iter().filter(|&&d| d > q).count() as f64 / points.len() as f64)
}

/// Sorted values against standard normal quantiles at `(i + 0.5) / n`.
pub fn qq_points(values: &[f64]) -> Vec<(f64, f64)> {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, v)| (normal.inverse_cdf((i as f64 + 0.5) / n), v))
        .collect()
}
