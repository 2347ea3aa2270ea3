use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{PreError, Result};

/// Probabilities from black-box classifiers are clamped to `[CLAMP, 1 - CLAMP]`.
pub const PROB_CLAMP: f64 = 1e-12;

/// Linear map from the latent space `R^d` to the observation space `R^m`.
#[derive(Debug, Clone, PartialEq)]
pub enum Design {
    /// `m = d`, `A = I`.
    Identity,
    /// Each latent coordinate is observed `times` times: `m = d * times`, with
    /// rows `[j*times, (j+1)*times)` reading coordinate `j`.
    Replicate { times: usize },
    Dense(DMatrix<f64>),
}

impl Design {
    pub fn output_dim(&self, input_dim: usize) -> usize {
        match self {
            Design::Identity => input_dim,
            Design::Replicate { times } => input_dim * times,
            Design::Dense(a) => a.nrows(),
        }
    }

    fn input_dim(&self, obs_dim: usize) -> Option<usize> {
        match self {
            Design::Identity => Some(obs_dim),
            Design::Replicate { times } => {
                (*times > 0 && obs_dim % times == 0).then(|| obs_dim / times)
            }
            Design::Dense(a) => (a.nrows() == obs_dim).then(|| a.ncols()),
        }
    }

    /// Squared residual `||y - A x||^2`.
    fn residual_sq(&self, y: &[f64], x: &[f64]) -> f64 {
        match self {
            Design::Identity => y.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum(),
            Design::Replicate { times } => y
                .chunks(*times)
                .zip(x)
                .map(|(block, xi)| block.iter().map(|v| (v - xi) * (v - xi)).sum::<f64>())
                .sum(),
            Design::Dense(a) => (0..a.nrows())
                .map(|r| {
                    let ax: f64 = a.row(r).iter().zip(x).map(|(c, v)| c * v).sum();
                    (y[r] - ax) * (y[r] - ax)
                })
                .sum(),
        }
    }
}

/// Class-probability callback `x -> P(y = +1 | x)`.
pub type ProbabilityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Which class probability a black-box likelihood reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassSide {
    /// `l(x) = P(+1 | x)`.
    Positive,
    /// `l(x) = 1 - P(+1 | x)`.
    Negative,
}

/// `log l(x) = log p(y | x)` for a fixed observation `y`.
#[derive(Clone)]
pub enum LogLikelihood {
    Unit,
    GaussianLinear {
        y: Vec<f64>,
        design: Design,
        sigma: f64,
    },
    BlackboxClassProb {
        prob: ProbabilityFn,
        side: ClassSide,
    },
}

impl fmt::Debug for LogLikelihood {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LogLikelihood::Unit => write!(f, "Unit"),
            LogLikelihood::GaussianLinear { y, design, sigma } => f
                .debug_struct("GaussianLinear")
                .field("obs_dim", &y.len())
                .field("design", design)
                .field("sigma", sigma)
                .finish(),
            LogLikelihood::BlackboxClassProb { side, .. } => {
                f.debug_struct("BlackboxClassProb").field("side", side).finish()
            }
        }
    }
}

impl LogLikelihood {
    pub fn gaussian(y: Vec<f64>, design: Design, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(PreError::InvalidInput(format!("gaussian sigma must be positive, got {sigma}")));
        }
        if y.is_empty() || y.iter().any(|v| !v.is_finite()) {
            return Err(PreError::InvalidInput("gaussian observation must be non-empty and finite".into()));
        }
        if design.input_dim(y.len()).is_none() {
            return Err(PreError::InvalidInput(format!(
                "design {design:?} is incompatible with an observation of length {}",
                y.len()
            )));
        }
        Ok(LogLikelihood::GaussianLinear { y, design, sigma })
    }

    pub fn blackbox(prob: ProbabilityFn, side: ClassSide) -> Self {
        LogLikelihood::BlackboxClassProb { prob, side }
    }

    pub fn is_unit(&self) -> bool {
        matches!(self, LogLikelihood::Unit)
    }

    /// Latent dimension implied by the likelihood, if it constrains one.
    pub fn latent_dim(&self) -> Option<usize> {
        match self {
            LogLikelihood::GaussianLinear { y, design, .. } => design.input_dim(y.len()),
            _ => None,
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(PreError::InvalidInput("likelihood input contains a non-finite value".into()));
        }
        match self {
            LogLikelihood::Unit => Ok(0.0),
            LogLikelihood::GaussianLinear { y, design, sigma } => {
                let d = design.input_dim(y.len()).unwrap_or(x.len());
                if d != x.len() {
                    return Err(PreError::DimensionMismatch {
                        context: "gaussian likelihood input",
                        expected: d,
                        found: x.len(),
                    });
                }
                let m = y.len() as f64;
                let var = sigma * sigma;
                Ok(-0.5 * m * (2.0 * PI * var).ln() - design.residual_sq(y, x) / (2.0 * var))
            }
            LogLikelihood::BlackboxClassProb { prob, side } => {
                let p = prob(x);
                if !(0.0..=1.0).contains(&p) {
                    return Err(PreError::InvalidBlackbox { value: p });
                }
                let p = match side {
                    ClassSide::Positive => p,
                    ClassSide::Negative => 1.0 - p,
                };
                Ok(p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP).ln())
            }
        }
    }
}
