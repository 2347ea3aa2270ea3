use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generators::{gen_ar_sequence, gen_prior_bank, normal_vector, standard_normal_samples, ArSettings};
use super::rng::{role, stream_rng};
use crate::applications::{
    autocorr_distance, plugin_score, pre_score, roc_auc, roc_curve, sst_distance, DetectionConfig, RocPoint,
    ScoreConvention,
};
use crate::error::{PreError, Result};
use crate::estimator::{fit, FitOptions};
use crate::inference::{
    asymptotic_report, chi2_quantile, consistency_diagnostics, outside_ellipse, ConsistencyOptions,
};
use crate::linalg::from_rows;
use crate::model::{Design, FeatureKind, FeatureMap, LogLikelihood, PreProblem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub seed: u64,
    pub replications: usize,
    pub scenario: Scenario,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Scenario {
    Normality(NormalityScenario),
    Consistency(ConsistencyScenario),
    Detection(DetectionScenario),
}

/// Two latent coordinates each observed `obs_per_coord` times with noise
/// `sigma`; standard-normal priors on both sides; identity features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalityScenario {
    pub latent_dim: usize,
    pub obs_per_coord: usize,
    pub y_mean: f64,
    pub y_sd: f64,
    pub sigma: f64,
    pub n_prior: usize,
    pub level: f64,
}

impl Default for NormalityScenario {
    fn default() -> Self {
        Self {
            latent_dim: 2,
            obs_per_coord: 50,
            y_mean: 0.5,
            y_sd: 0.1,
            sigma: 10.0,
            n_prior: 500,
            level: 0.95,
        }
    }
}

/// Standard-normal priors with `n_p = n_q = n`, identity Gaussian likelihoods
/// and identity features, probed on the ball of radius `radius_scale / sqrt(n)`
/// around the zero vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConsistencyScenario {
    pub dim: usize,
    pub n_grid: Vec<usize>,
    pub sigma: f64,
    pub y_p: Option<Vec<f64>>,
    pub y_q: Option<Vec<f64>>,
    pub radius_scale: f64,
    pub c_r: f64,
    pub n_restarts: usize,
}

impl Default for ConsistencyScenario {
    fn default() -> Self {
        Self {
            dim: 2,
            n_grid: vec![50, 100, 200, 400, 800, 1600],
            sigma: 1.0,
            y_p: None,
            y_q: None,
            radius_scale: 10.0,
            c_r: 1.5,
            n_restarts: 8,
        }
    }
}

/// Which end of a score's range indicates a signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Larger,
    Smaller,
}

impl Orientation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Orientation::Larger => v,
            Orientation::Smaller => -v,
        }
    }
}

/// Background pairs share `alpha_background`; signal pairs pair it with
/// `alpha_signal`. Prior banks draw alpha per sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionScenario {
    pub window_len: usize,
    pub n_prior: usize,
    pub n_pairs: usize,
    pub alpha_background: f64,
    pub alpha_signal: f64,
    pub prior_p_alpha: (f64, f64),
    pub prior_q_alpha: (f64, f64),
    pub ar: ArSettings,
    pub autocorr_lags: usize,
    pub ar_order: usize,
    pub sst_window: usize,
    pub sst_rank: usize,
    pub sigma: f64,
    pub convention: ScoreConvention,
    pub pre_orientation: Orientation,
}

impl Default for DetectionScenario {
    fn default() -> Self {
        Self {
            window_len: 50,
            n_prior: 2000,
            n_pairs: 100,
            alpha_background: 0.5,
            alpha_signal: -0.2,
            prior_p_alpha: (0.5, 0.1),
            prior_q_alpha: (0.0, 0.5),
            ar: ArSettings::default(),
            autocorr_lags: 20,
            ar_order: 20,
            sst_window: 25,
            sst_rank: 5,
            sigma: 1.0,
            convention: ScoreConvention::Divergence,
            pre_orientation: Orientation::Larger,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityReport {
    pub name: String,
    pub replications: usize,
    pub failures: usize,
    pub failure_budget_ok: bool,
    pub level: f64,
    pub chi2_threshold: f64,
    pub outside_count: usize,
    pub outside_fraction: f64,
    /// `sqrt(n_p) * delta_hat` per successful replication.
    pub scaled_deltas: Vec<Vec<f64>>,
    /// Each scaled component divided by its predicted standard deviation.
    pub standardized: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub n: usize,
    pub radius: f64,
    pub runs: usize,
    pub min_eig_mean: f64,
    pub min_eig_sd: f64,
    pub weyl_mean: f64,
    pub weyl_sd: f64,
    pub ratio_mean: f64,
    pub ratio_sd: f64,
    pub weyl_below_min_eig: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub name: String,
    pub ratio_upper_limit: f64,
    pub rows: Vec<ConsistencyRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRoc {
    pub method: String,
    pub auc: f64,
    pub failures: usize,
    pub roc: Vec<RocPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRun {
    pub seed: u64,
    pub methods: Vec<MethodRoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub name: String,
    pub runs: Vec<DetectionRun>,
    /// `(method, mean AUC over runs)`.
    pub mean_auc: Vec<(String, f64)>,
}

impl DetectionReport {
    pub fn mean_auc_of(&self, method: &str) -> Option<f64> {
        self.mean_auc.iter().find(|(m, _)| m == method).map(|(_, v)| *v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ExperimentReport {
    Normality(NormalityReport),
    Consistency(ConsistencyReport),
    Detection(DetectionReport),
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    Ok(match &spec.scenario {
        Scenario::Normality(_) => ExperimentReport::Normality(run_normality_experiment(spec)?),
        Scenario::Consistency(_) => ExperimentReport::Consistency(run_consistency_experiment(spec)?),
        Scenario::Detection(_) => ExperimentReport::Detection(run_detection_experiment(spec)?),
    })
}

fn check_replications(spec: &ExperimentSpec) -> Result<()> {
    if spec.replications == 0 {
        return Err(PreError::InvalidInput("experiment needs at least one replication".into()));
    }
    Ok(())
}

struct NormalityDraw {
    scaled: Vec<f64>,
    standardized: Vec<f64>,
    outside: bool,
}

fn normality_replication(seed: u64, index: u64, sc: &NormalityScenario) -> Result<NormalityDraw> {
    let m = sc.latent_dim * sc.obs_per_coord;
    let y_p = normal_vector(m, sc.y_mean, sc.y_sd, &mut stream_rng(seed, index, role::Y_P));
    let y_q = normal_vector(m, sc.y_mean, sc.y_sd, &mut stream_rng(seed, index, role::Y_Q));
    let xp = standard_normal_samples(sc.n_prior, sc.latent_dim, &mut stream_rng(seed, index, role::X_P))?;
    let xq = standard_normal_samples(sc.n_prior, sc.latent_dim, &mut stream_rng(seed, index, role::X_Q))?;
    let design = Design::Replicate {
        times: sc.obs_per_coord,
    };
    let problem = PreProblem::new(
        LogLikelihood::gaussian(y_p, design.clone(), sc.sigma)?,
        LogLikelihood::gaussian(y_q, design, sc.sigma)?,
        xp,
        xq,
        FeatureMap::identity(sc.latent_dim),
    )?;
    let r = fit(&problem, &FitOptions::default())?;
    if !r.converged {
        return Err(PreError::SolverFailure("replication fit did not converge".into()));
    }
    let report = asymptotic_report(&problem, &r)?;
    let root_n = (problem.n_p() as f64).sqrt();
    let scaled: Vec<f64> = r.delta_hat.iter().map(|d| d * root_n).collect();
    let avar = from_rows(&report.avar);
    let standardized = scaled
        .iter()
        .enumerate()
        .map(|(i, s)| s / avar[(i, i)].sqrt())
        .collect();
    let outside = outside_ellipse(&scaled, &vec![0.0; sc.latent_dim], &avar, sc.level)?;
    Ok(NormalityDraw {
        scaled,
        standardized,
        outside,
    })
}

/// Repeats the fit on fresh data and counts how often `sqrt(n) delta_hat`
/// leaves the predicted confidence ellipse centred at zero.
pub fn run_normality_experiment(spec: &ExperimentSpec) -> Result<NormalityReport> {
    check_replications(spec)?;
    let Scenario::Normality(sc) = &spec.scenario else {
        return Err(PreError::InvalidInput("spec does not describe a normality scenario".into()));
    };
    let draws: Vec<Result<NormalityDraw>> = (0..spec.replications as u64)
        .into_par_iter()
        .map(|i| normality_replication(spec.seed, i, sc))
        .collect();
    let mut failures = 0;
    let mut outside_count = 0;
    let mut scaled_deltas = Vec::new();
    let mut standardized = Vec::new();
    for d in draws {
        match d {
            Ok(d) => {
                outside_count += usize::from(d.outside);
                scaled_deltas.push(d.scaled);
                standardized.push(d.standardized);
            }
            Err(_) => failures += 1,
        }
    }
    let ok = scaled_deltas.len();
    Ok(NormalityReport {
        name: spec.name.clone(),
        replications: spec.replications,
        failures,
        failure_budget_ok: failures as f64 <= 0.01 * spec.replications as f64,
        level: sc.level,
        chi2_threshold: chi2_quantile(sc.latent_dim, sc.level)?,
        outside_count,
        outside_fraction: if ok == 0 { f64::NAN } else { outside_count as f64 / ok as f64 },
        scaled_deltas,
        standardized,
    })
}

/// Mean and sample standard deviation, summed in index order.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Sweeps `n` over the grid and summarises the consistency diagnostics.
pub fn run_consistency_experiment(spec: &ExperimentSpec) -> Result<ConsistencyReport> {
    check_replications(spec)?;
    let Scenario::Consistency(sc) = &spec.scenario else {
        return Err(PreError::InvalidInput("spec does not describe a consistency scenario".into()));
    };
    if sc.n_grid.is_empty() || sc.n_grid.contains(&0) {
        return Err(PreError::InvalidInput("n grid must be non-empty and positive".into()));
    }
    let d = sc.dim;
    let y_p = sc.y_p.clone().unwrap_or_else(|| vec![0.0; d]);
    let y_q = sc.y_q.clone().unwrap_or_else(|| vec![0.0; d]);
    let lp = LogLikelihood::gaussian(y_p, Design::Identity, sc.sigma)?;
    let lq = LogLikelihood::gaussian(y_q, Design::Identity, sc.sigma)?;
    let mut rows = Vec::with_capacity(sc.n_grid.len());
    for (g, &n) in sc.n_grid.iter().enumerate() {
        let radius = sc.radius_scale / (n as f64).sqrt();
        let diags: Vec<_> = (0..spec.replications as u64)
            .into_par_iter()
            .map(|rep| {
                let index = ((g as u64) << 32) | rep;
                let xp = standard_normal_samples(n, d, &mut stream_rng(spec.seed, index, role::X_P))?;
                let xq = standard_normal_samples(n, d, &mut stream_rng(spec.seed, index, role::X_Q))?;
                let problem = PreProblem::new(lp.clone(), lq.clone(), xp, xq, FeatureMap::identity(d))?;
                let options = ConsistencyOptions {
                    n_restarts: sc.n_restarts,
                    seed: super::rng::stream_key(spec.seed, index, role::DIAGNOSTICS),
                    ..ConsistencyOptions::default()
                };
                consistency_diagnostics(&problem, &vec![0.0; d], radius, &options)
            })
            .collect::<Result<_>>()?;
        let min_eig: Vec<f64> = diags.iter().map(|x| x.min_eig_over_ball).collect();
        let weyl: Vec<f64> = diags.iter().map(|x| x.weyl_lower_bound).collect();
        let ratio: Vec<f64> = diags.iter().map(|x| x.ratio_stat).collect();
        let (min_eig_mean, min_eig_sd) = mean_sd(&min_eig);
        let (weyl_mean, weyl_sd) = mean_sd(&weyl);
        let (ratio_mean, ratio_sd) = mean_sd(&ratio);
        rows.push(ConsistencyRow {
            n,
            radius,
            runs: diags.len(),
            min_eig_mean,
            min_eig_sd,
            weyl_mean,
            weyl_sd,
            ratio_mean,
            ratio_sd,
            weyl_below_min_eig: diags.iter().all(|x| x.weyl_lower_bound <= x.min_eig_over_ball + 1e-8),
        });
    }
    Ok(ConsistencyReport {
        name: spec.name.clone(),
        ratio_upper_limit: sc.radius_scale / sc.c_r,
        rows,
    })
}

pub const DETECTION_METHODS: [&str; 4] = ["pre", "plugin", "autocorr", "sst"];

fn detection_run(seed: u64, sc: &DetectionScenario) -> Result<DetectionRun> {
    let w = sc.window_len;
    let settings = ArSettings { steps: w, ..sc.ar };
    let prior_p = gen_prior_bank(sc.prior_p_alpha.0, sc.prior_p_alpha.1, sc.n_prior, &settings, seed, role::PRIOR_P)?;
    let prior_q = gen_prior_bank(sc.prior_q_alpha.0, sc.prior_q_alpha.1, sc.n_prior, &settings, seed, role::PRIOR_Q)?;
    let feature = FeatureMap::new(
        FeatureKind::AutoCorr {
            max_lag: sc.autocorr_lags,
        },
        w,
    )?;
    let config = DetectionConfig::new(w, 1, feature, sc.sigma, Arc::new(prior_p), Arc::new(prior_q))?
        .with_convention(sc.convention);
    config.prior_delta()?;

    // Pair i < n_pairs is background, the rest are signal pairs.
    let scores: Vec<[Option<f64>; 4]> = (0..2 * sc.n_pairs as u64)
        .into_par_iter()
        .map(|i| {
            let signal = i >= sc.n_pairs as u64;
            let alpha_q = if signal { sc.alpha_signal } else { sc.alpha_background };
            let y_p = gen_ar_sequence(sc.alpha_background, &settings, &mut stream_rng(seed, i, role::Y_P))?.observed;
            let y_q = gen_ar_sequence(alpha_q, &settings, &mut stream_rng(seed, i, role::Y_Q))?.observed;
            Ok([
                pre_score(&y_p, &y_q, &config).ok().map(|v| sc.pre_orientation.apply(v)),
                plugin_score(&y_p, &y_q, &config).ok().map(|v| sc.pre_orientation.apply(v)),
                autocorr_distance(&y_p, &y_q, sc.ar_order).ok(),
                sst_distance(&y_p, &y_q, sc.sst_window, sc.sst_rank).ok(),
            ])
        })
        .collect::<Result<_>>()?;

    let mut methods = Vec::with_capacity(4);
    for (m, name) in DETECTION_METHODS.iter().enumerate() {
        let (neg, pos): (Vec<_>, Vec<_>) = scores.iter().enumerate().partition(|(i, _)| *i < sc.n_pairs);
        let neg: Vec<f64> = neg.iter().filter_map(|(_, s)| s[m]).collect();
        let pos: Vec<f64> = pos.iter().filter_map(|(_, s)| s[m]).collect();
        let failures = 2 * sc.n_pairs - neg.len() - pos.len();
        let (auc, roc) = if neg.is_empty() || pos.is_empty() {
            (f64::NAN, Vec::new())
        } else {
            (roc_auc(&pos, &neg)?, roc_curve(&pos, &neg)?)
        };
        methods.push(MethodRoc {
            method: name.to_string(),
            auc,
            failures,
            roc,
        });
    }
    Ok(DetectionRun { seed, methods })
}

/// Scores background and signal window pairs with PRE, the plugin estimator
/// and the two baselines; each replication uses its own prior banks and pairs.
pub fn run_detection_experiment(spec: &ExperimentSpec) -> Result<DetectionReport> {
    check_replications(spec)?;
    let Scenario::Detection(sc) = &spec.scenario else {
        return Err(PreError::InvalidInput("spec does not describe a detection scenario".into()));
    };
    if sc.n_pairs == 0 {
        return Err(PreError::InvalidInput("detection needs at least one pair of each kind".into()));
    }
    let runs: Vec<DetectionRun> = (0..spec.replications as u64)
        .map(|r| detection_run(super::rng::stream_key(spec.seed, r, role::SEED_BANK), sc))
        .collect::<Result<_>>()?;
    let mean_auc = DETECTION_METHODS
        .iter()
        .enumerate()
        .map(|(m, name)| {
            let aucs: Vec<f64> = runs.iter().map(|r| r.methods[m].auc).collect();
            (name.to_string(), mean_sd(&aucs).0)
        })
        .collect();
    Ok(DetectionReport {
        name: spec.name.clone(),
        runs,
        mean_auc,
    })
}
