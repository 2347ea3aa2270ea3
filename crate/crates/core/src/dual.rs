//! The entropy-regularised dual program and its residual certificate.
//!
//! Inner stage: minimise `sum mu log mu - mu log l_q` over the simplex subject to
//! `|| target - sum mu_j f_j || <= r_n` by an augmented Lagrangian whose
//! subproblems are solved with entropic mirror descent. Outer stage: recover
//! `delta_dual` by matching `sum v_j(delta) f_j` to `sum mu_j f_j` with the
//! estimator's Newton solver, and report the attained residual.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{PreError, Result};
use crate::estimator::{minimize, FitOptions, FitResult, TiltedObjective};
use crate::linalg::logsumexp;
use crate::model::PreProblem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualOptions {
    /// Constraint radius `r_n`.
    pub r_n: f64,
    /// Target constraint violation and outer-stage gradient tolerance.
    pub tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub initial_penalty: f64,
    pub max_penalty: f64,
}

impl Default for DualOptions {
    fn default() -> Self {
        Self {
            r_n: 0.0,
            tol: 1e-8,
            max_outer: 500,
            max_inner: 20_000,
            initial_penalty: 1.0,
            max_penalty: 1e6,
        }
    }
}

impl DualOptions {
    pub fn with_radius(r_n: f64) -> Self {
        Self {
            r_n,
            ..Self::default()
        }
    }
}

/// `R_3 / sqrt(min(n_p, n_q))`.
pub fn radius_schedule(r3: f64, n_p: usize, n_q: usize) -> f64 {
    r3 / (n_p.min(n_q) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualResult {
    pub mu: Vec<f64>,
    pub delta_dual: Vec<f64>,
    pub moment_gap: f64,
    pub r_n: f64,
    pub residual_eqn: f64,
    pub converged: bool,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub final_penalty: f64,
}

fn project_ball(u: &[f64], r: f64) -> Vec<f64> {
    let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= r {
        u.to_vec()
    } else {
        u.iter().map(|x| x * r / norm).collect()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `sum_j mu_j g_j` for row-major `g`.
fn weighted_mean(g: &[Vec<f64>], mu: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; k];
    for (row, &m) in g.iter().zip(mu) {
        for (o, x) in out.iter_mut().zip(row) {
            *o += m * x;
        }
    }
    out
}

/// Lower and upper bounds on the distance from the origin to the convex hull
/// of `g`, by Frank-Wolfe with exact line search.
pub(crate) fn hull_distance_bounds(g: &[Vec<f64>], radius: f64, max_iter: usize) -> (f64, f64) {
    let k = g.first().map_or(0, Vec::len);
    let mut x = g
        .iter()
        .min_by(|a, b| norm(a).total_cmp(&norm(b)))
        .cloned()
        .unwrap_or_default();
    let mut lower = 0.0_f64;
    for _ in 0..max_iter {
        let xn = norm(&x);
        if xn <= radius || xn == 0.0 {
            return (lower, xn);
        }
        let (best, score) = g
            .iter()
            .map(|row| (row, row.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty hull");
        lower = lower.max(score / xn);
        if lower > radius {
            return (lower, xn);
        }
        let d: Vec<f64> = (0..k).map(|c| best[c] - x[c]).collect();
        let dd: f64 = d.iter().map(|v| v * v).sum();
        if dd == 0.0 {
            return (lower, xn);
        }
        let gamma = (-(x.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>()) / dd).clamp(0.0, 1.0);
        for c in 0..k {
            x[c] += gamma * d[c];
        }
    }
    (lower, norm(&x))
}

/// Solves the dual program; see the module docs.
pub fn solve_dual(problem: &PreProblem, options: &DualOptions) -> Result<DualResult> {
    let r = options.r_n;
    if !(r >= 0.0 && r.is_finite()) {
        return Err(PreError::InvalidInput(format!("dual radius must be nonnegative, got {r}")));
    }
    if !(options.tol > 0.0) {
        return Err(PreError::InvalidInput("dual tolerance must be positive".into()));
    }
    let k = problem.dim();
    let n = problem.n_q();
    let target: Vec<f64> = problem.p_moment().iter().copied().collect();
    let fq = problem.fq();
    // Features centred at the target: the constraint reads || sum mu_j g_j || <= r.
    let g: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..k).map(|c| fq[(j, c)] - target[c]).collect())
        .collect();
    let scale = g.iter().map(|row| norm(row)).fold(0.0, f64::max);

    let (lower, _) = hull_distance_bounds(&g, r, 10_000);
    if lower > r + 1e-12 * (1.0 + scale) {
        return Err(PreError::Infeasible { gap: lower, radius: r });
    }

    let log_l = problem.log_lq_values();
    let lse = logsumexp(log_l);
    if !lse.is_finite() {
        return Err(PreError::DegenerateEvidence { side: "q" });
    }
    let mut log_mu: Vec<f64> = log_l.iter().map(|v| v - lse).collect();
    let mut mu: Vec<f64> = log_mu.iter().map(|v| v.exp()).collect();
    let mut lambda = vec![0.0; k];
    let mut rho = options.initial_penalty;
    let scale_sq = scale * scale;

    let violation = |mu: &[f64]| {
        let c = weighted_mean(&g, mu, k);
        (norm(&c) - r).max(0.0)
    };
    let mut viol = violation(&mu);
    let mut prev_viol = viol;
    let mut outer = 0;
    let mut inner_total = 0;
    let mut converged = viol <= options.tol;
    let mut next = vec![0.0; n];

    while !converged && outer < options.max_outer {
        outer += 1;
        let eta = 0.5 / (1.0 + rho * scale_sq);
        for _ in 0..options.max_inner {
            inner_total += 1;
            let c = weighted_mean(&g, &mu, k);
            let u: Vec<f64> = c.iter().zip(&lambda).map(|(ci, li)| ci + li / rho).collect();
            let pu = project_ball(&u, r);
            let z: Vec<f64> = u.iter().zip(&pu).map(|(a, b)| rho * (a - b)).collect();
            for j in 0..n {
                let gz: f64 = g[j].iter().zip(&z).map(|(a, b)| a * b).sum();
                next[j] = (1.0 - eta) * log_mu[j] + eta * (log_l[j] - gz);
            }
            let norm_c = logsumexp(&next);
            let mut change = 0.0;
            for j in 0..n {
                log_mu[j] = next[j] - norm_c;
                let m = log_mu[j].exp();
                change += (m - mu[j]).abs();
                mu[j] = m;
            }
            if change <= 1e-3 * eta * options.tol {
                break;
            }
        }
        let c = weighted_mean(&g, &mu, k);
        let u: Vec<f64> = c.iter().zip(&lambda).map(|(ci, li)| ci + li / rho).collect();
        let pu = project_ball(&u, r);
        lambda = u.iter().zip(&pu).map(|(a, b)| rho * (a - b)).collect();
        viol = violation(&mu);
        converged = viol <= options.tol;
        if !converged && viol > 0.25 * prev_viol && rho < options.max_penalty {
            rho *= 10.0;
        }
        prev_viol = viol;
    }

    let mu_vec = DVector::from_column_slice(&mu);
    let tilt_target = fq.tr_mul(&mu_vec);
    let moment_gap = (problem.p_moment() - &tilt_target).norm();
    let obj = TiltedObjective::new(fq, log_l, tilt_target, 0.0);
    let outer_fit = minimize(&obj, &FitOptions::with_tol(options.tol))?;
    Ok(DualResult {
        mu,
        delta_dual: outer_fit.delta_hat,
        moment_gap,
        r_n: r,
        residual_eqn: outer_fit.grad_norm,
        converged: converged && outer_fit.converged,
        outer_iterations: outer,
        inner_iterations: inner_total,
        final_penalty: rho,
    })
}

/// `E_{q_n}(delta) = || sum_j v_j(delta) f_j - sum_j mu_j f_j ||`.
pub fn residual_eqn(problem: &PreProblem, mu: &[f64], delta: &[f64]) -> Result<f64> {
    if mu.len() != problem.n_q() {
        return Err(PreError::DimensionMismatch {
            context: "dual weights",
            expected: problem.n_q(),
            found: mu.len(),
        });
    }
    let target = problem.fq().tr_mul(&DVector::from_column_slice(mu));
    let obj = TiltedObjective::new(problem.fq(), problem.log_lq_values(), target, 0.0);
    Ok(obj.evaluate(delta, false)?.gradient.iter().map(|g| g * g).sum::<f64>().sqrt())
}

/// `|| delta_dual - delta_hat ||`.
pub fn dual_primal_gap(dual: &DualResult, fit: &FitResult) -> Result<f64> {
    if dual.delta_dual.len() != fit.delta_hat.len() {
        return Err(PreError::DimensionMismatch {
            context: "dual/primal comparison",
            expected: fit.delta_hat.len(),
            found: dual.delta_dual.len(),
        });
    }
    Ok(dual
        .delta_dual
        .iter()
        .zip(&fit.delta_hat)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// The inner-stage objective `sum mu log mu - mu log l` (with `0 log 0 = 0`).
pub fn inner_objective(mu: &[f64], log_l: &[f64]) -> f64 {
    mu.iter()
        .zip(log_l)
        .filter(|(m, _)| **m > 0.0)
        .map(|(m, l)| m * (m.ln() - l))
        .sum()
}
