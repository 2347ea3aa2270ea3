#![allow(dead_code)]

use postratio::applications::roc_auc;
use postratio::estimator::{gradient, hessian, objective};
use postratio::inference::{consistency_diagnostics, ConsistencyOptions};
use postratio::model::{q_side_weights, Design, SIMPLEX_TOL};
use postratio::simharness::{run_experiment, standard_normal_samples, ExperimentSpec, NormalityScenario, Scenario};
use postratio::{FeatureKind, FeatureMap, LogLikelihood, PreProblem, PriorSampleSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n x d` samples from `N(shift, scale^2)` per coordinate.
pub fn normal_samples(n: usize, d: usize, shift: f64, scale: f64, r: &mut ChaCha8Rng) -> PriorSampleSet {
    let base = standard_normal_samples(n, d, r).unwrap();
    let data = base.as_flat().iter().map(|z| shift + scale * z).collect();
    PriorSampleSet::from_flat(data, n, d).unwrap()
}

/// Small random problem: `k = d` in 1..=3, identity features, either unit or
/// identity-design Gaussian likelihoods.
pub fn random_problem(seed: u64, unit: bool) -> PreProblem {
    let mut r = rng(seed);
    let d = r.random_range(1..=3);
    let n_p = r.random_range(20..=200);
    let n_q = r.random_range(20..=200);
    let shift = r.random_range(-0.5..0.5);
    let xp = normal_samples(n_p, d, shift, 1.0, &mut r);
    let xq = normal_samples(n_q, d, 0.0, r.random_range(1.0..1.5), &mut r);
    let (lp, lq) = if unit {
        (LogLikelihood::Unit, LogLikelihood::Unit)
    } else {
        let y_p: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
        let y_q: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
        let sigma = r.random_range(0.8..2.0);
        (
            LogLikelihood::gaussian(y_p, Design::Identity, sigma).unwrap(),
            LogLikelihood::gaussian(y_q, Design::Identity, sigma).unwrap(),
        )
    };
    PreProblem::new(lp, lq, xp, xq, FeatureMap::identity(d)).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// KLIEP with a log-linear model: maximises the mean of `log r` over the
/// p-sample where `r(x) = exp<d, f(x)> / mean_q exp<d, f>`. Solved by
/// Barzilai-Borwein gradient descent on the negated objective.
pub fn kliep_oracle(fp: &[Vec<f64>], fq: &[Vec<f64>]) -> Vec<f64> {
    let k = fp[0].len();
    let mean_p: Vec<f64> = (0..k).map(|c| fp.iter().map(|f| f[c]).sum::<f64>() / fp.len() as f64).collect();
    let value_grad = |d: &[f64]| -> (f64, Vec<f64>) {
        let logits: Vec<f64> = fq.iter().map(|f| dot(d, f)).collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let s: f64 = e.iter().sum();
        let value = -dot(d, &mean_p) + m + (s / fq.len() as f64).ln();
        let g = (0..k)
            .map(|c| fq.iter().zip(&e).map(|(f, w)| f[c] * w).sum::<f64>() / s - mean_p[c])
            .collect();
        (value, g)
    };
    let mut d = vec![0.0; k];
    let (mut f, mut g) = value_grad(&d);
    let mut step = 0.1;
    for _ in 0..100_000 {
        if g.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-12 {
            break;
        }
        // Backtrack from the BB step until the objective does not increase.
        let mut t = step;
        let (mut nd, mut nf, mut ng);
        loop {
            nd = d.iter().zip(&g).map(|(a, b)| a - t * b).collect::<Vec<_>>();
            (nf, ng) = value_grad(&nd);
            if nf <= f + 1e-15 * f.abs().max(1.0) || t < 1e-20 {
                break;
            }
            t *= 0.5;
        }
        let s: Vec<f64> = nd.iter().zip(&d).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = ng.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        step = if sy > 0.0 { dot(&s, &s) / sy } else { 1.0 };
        d = nd;
        f = nf;
        g = ng;
    }
    d
}

pub fn rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Posterior of a `N(m0, s0^2)` prior after one observation `y ~ N(x, sigma^2)`,
/// returned as the natural parameters `(mean / var, -1 / (2 var))`.
pub fn conjugate_natural(m0: f64, s0: f64, y: f64, sigma: f64) -> [f64; 2] {
    let precision = 1.0 / (s0 * s0) + 1.0 / (sigma * sigma);
    let mean = (m0 / (s0 * s0) + y / (sigma * sigma)) / precision;
    [mean * precision, -0.5 * precision]
}

/// Conjugate-Gaussian problem with `[x, x^2]` features; returns the problem and
/// the natural-parameter difference of the two posteriors.
pub fn conjugate_problem(n: usize, seed: u64) -> (PreProblem, [f64; 2]) {
    let (mp, sp, yp) = (0.0, 1.0, 0.5);
    let (mq, sq, yq) = (0.2, 1.2, -0.3);
    let sigma = 1.0;
    let mut r = rng(seed);
    let xp = normal_samples(n, 1, mp, sp, &mut r);
    let xq = normal_samples(n, 1, mq, sq, &mut r);
    let problem = PreProblem::new(
        LogLikelihood::gaussian(vec![yp], Design::Identity, sigma).unwrap(),
        LogLikelihood::gaussian(vec![yq], Design::Identity, sigma).unwrap(),
        xp,
        xq,
        FeatureMap::new(FeatureKind::PolynomialDeg2, 1).unwrap(),
    )
    .unwrap();
    let a = conjugate_natural(mp, sp, yp, sigma);
    let b = conjugate_natural(mq, sq, yq, sigma);
    (problem, [a[0] - b[0], a[1] - b[1]])
}

pub fn fd_gradient(problem: &PreProblem, delta: &[f64], h: f64) -> Vec<f64> {
    (0..delta.len())
        .map(|c| {
            let mut up = delta.to_vec();
            let mut dn = delta.to_vec();
            up[c] += h;
            dn[c] -= h;
            (objective(problem, &up).unwrap() - objective(problem, &dn).unwrap()) / (2.0 * h)
        })
        .collect()
}

pub fn fd_hessian(problem: &PreProblem, delta: &[f64], h: f64) -> Vec<Vec<f64>> {
    let k = delta.len();
    let mut out = vec![vec![0.0; k]; k];
    for c in 0..k {
        let mut up = delta.to_vec();
        let mut dn = delta.to_vec();
        up[c] += h;
        dn[c] -= h;
        let gu = gradient(problem, &up).unwrap();
        let gd = gradient(problem, &dn).unwrap();
        for r in 0..k {
            out[r][c] = (gu[r] - gd[r]) / (2.0 * h);
        }
    }
    out
}

/// `|a - b| / max(|b|, floor)` maximised over entries.
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(floor))
        .fold(0.0, f64::max)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

// Invariant checks shared by the property suite and the acceptance test.

pub fn check_weight_simplex(problem: &PreProblem, delta: &[f64]) -> Result<(), String> {
    let v = q_side_weights(problem, delta).map_err(|e| e.to_string())?;
    let s: f64 = v.as_slice().iter().sum();
    if (s - 1.0).abs() > SIMPLEX_TOL || v.as_slice().iter().any(|&x| x < 0.0) {
        return Err(format!("weights sum to {s}"));
    }
    Ok(())
}

pub fn check_convexity(problem: &PreProblem, d1: &[f64], d2: &[f64], t: f64) -> Result<(), String> {
    let mid: Vec<f64> = d1.iter().zip(d2).map(|(a, b)| t * a + (1.0 - t) * b).collect();
    let lhs = objective(problem, &mid).map_err(|e| e.to_string())?;
    let rhs = t * objective(problem, d1).unwrap() + (1.0 - t) * objective(problem, d2).unwrap();
    if lhs > rhs + 1e-9 {
        return Err(format!("convexity violated: {lhs} > {rhs}"));
    }
    let h = hessian(problem, &mid).unwrap();
    let min_eig = h.symmetric_eigen().eigenvalues.min();
    if min_eig < -1e-8 {
        return Err(format!("hessian eigenvalue {min_eig}"));
    }
    Ok(())
}

pub fn check_weyl(seed: u64, radius: f64) -> Result<(), String> {
    let problem = random_problem(seed, seed % 2 == 0);
    let center = vec![0.1; problem.dim()];
    let options = ConsistencyOptions {
        n_restarts: 2,
        max_steps: 20,
        seed,
    };
    let d = consistency_diagnostics(&problem, &center, radius, &options).map_err(|e| e.to_string())?;
    if d.weyl_lower_bound > d.min_eig_over_ball + 1e-8 {
        return Err(format!("weyl {} above min eig {}", d.weyl_lower_bound, d.min_eig_over_ball));
    }
    Ok(())
}

pub fn check_roc_complement(a: &[f64], b: &[f64]) -> Result<(), String> {
    let s = roc_auc(a, b).unwrap() + roc_auc(b, a).unwrap();
    if (s - 1.0).abs() > 1e-12 {
        return Err(format!("auc(a,b) + auc(b,a) = {s}"));
    }
    Ok(())
}

/// Runs a small normality experiment on one and on four threads and compares
/// the serialised reports.
pub fn check_thread_determinism(seed: u64) -> Result<(), String> {
    let spec = ExperimentSpec {
        name: "det".into(),
        seed,
        replications: 6,
        scenario: Scenario::Normality(NormalityScenario {
            n_prior: 60,
            ..NormalityScenario::default()
        }),
    };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| serde_json::to_string(&run_experiment(&spec).unwrap()).unwrap())
    };
    if run(1) != run(4) {
        return Err(format!("seed {seed}: output differs across thread counts"));
    }
    Ok(())
}
