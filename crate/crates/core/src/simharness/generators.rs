use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rng::stream_rng;
use crate::error::{PreError, Result};
use crate::model::PriorSampleSet;

/// Noise and length settings of the latent AR(1) process observed with noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArSettings {
    pub steps: usize,
    pub burn_in: usize,
    pub process_sd: f64,
    pub obs_sd: f64,
}

impl Default for ArSettings {
    /// 100 steps with the first 50 discarded, process variance 0.1 and
    /// observation variance 0.02.
    fn default() -> Self {
        Self {
            steps: 50,
            burn_in: 50,
            process_sd: 0.1_f64.sqrt(),
            obs_sd: 0.02_f64.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArSequence {
    pub latent: Vec<f64>,
    pub observed: Vec<f64>,
    /// `|alpha| >= 1`.
    pub nonstationary: bool,
}

/// `x_t = alpha x_{t-1} + e_t`, `y_t = x_t + e'_t` from `x_0 = 0`; the first
/// `burn_in` steps are discarded and the next `steps` returned.
pub fn gen_ar_sequence<R: Rng + ?Sized>(alpha: f64, settings: &ArSettings, rng: &mut R) -> Result<ArSequence> {
    if settings.steps == 0 {
        return Err(PreError::InvalidInput("AR sequence needs at least one kept step".into()));
    }
    if !(settings.process_sd >= 0.0 && settings.obs_sd >= 0.0 && alpha.is_finite()) {
        return Err(PreError::InvalidInput("AR noise scales must be nonnegative and alpha finite".into()));
    }
    let mut x = 0.0;
    let mut latent = Vec::with_capacity(settings.steps);
    let mut observed = Vec::with_capacity(settings.steps);
    for t in 0..settings.burn_in + settings.steps {
        let e: f64 = rng.sample(StandardNormal);
        let e_obs: f64 = rng.sample(StandardNormal);
        x = alpha * x + settings.process_sd * e;
        if t >= settings.burn_in {
            latent.push(x);
            observed.push(x + settings.obs_sd * e_obs);
        }
    }
    Ok(ArSequence {
        latent,
        observed,
        nonstationary: alpha.abs() >= 1.0,
    })
}

/// Latent windows of `n_sequences` AR sequences whose coefficient is drawn
/// from `N(alpha_mean, alpha_sd^2)` per sequence. Row `i` uses stream
/// `(seed, i, role)`.
pub fn gen_prior_bank(
    alpha_mean: f64,
    alpha_sd: f64,
    n_sequences: usize,
    settings: &ArSettings,
    seed: u64,
    role: u64,
) -> Result<PriorSampleSet> {
    if n_sequences == 0 {
        return Err(PreError::InvalidInput("prior bank needs at least one sequence".into()));
    }
    let alpha_dist = Normal::new(alpha_mean, alpha_sd)
        .map_err(|e| PreError::InvalidInput(format!("alpha prior: {e}")))?;
    let rows: Vec<Vec<f64>> = (0..n_sequences)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64, role);
            let alpha = alpha_dist.sample(&mut rng);
            gen_ar_sequence(alpha, settings, &mut rng).map(|s| s.latent)
        })
        .collect::<Result<_>>()?;
    PriorSampleSet::from_rows(rows)
}

/// `n x d` matrix of independent `N(0, 1)` draws.
pub fn standard_normal_samples<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Result<PriorSampleSet> {
    let data: Vec<f64> = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
    PriorSampleSet::from_flat(data, n, d)
}

/// `n` independent `N(mean, sd^2)` draws.
pub fn normal_vector<R: Rng + ?Sized>(n: usize, mean: f64, sd: f64, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| mean + sd * rng.sample::<f64, _>(StandardNormal))
        .collect()
}
