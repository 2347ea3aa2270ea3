use serde::{Deserialize, Serialize};

use crate::error::{PreError, Result};

/// The statistic used by the log-linear ratio model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    Identity,
    /// `[x, x^2]` with the square taken elementwise.
    PolynomialDeg2,
    /// Biased sample autocorrelations at lags `1..=max_lag`.
    AutoCorr { max_lag: usize },
    /// `[x1*x2, x2*x3, ..., x_{d-1}*x_d]`.
    Lag1Products,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMap {
    kind: FeatureKind,
    input_dim: usize,
}

impl FeatureMap {
    pub fn new(kind: FeatureKind, input_dim: usize) -> Result<Self> {
        if input_dim == 0 {
            return Err(PreError::InvalidInput("feature input dimension must be positive".into()));
        }
        match kind {
            FeatureKind::AutoCorr { max_lag } => {
                if max_lag == 0 {
                    return Err(PreError::InvalidInput("autocorr max_lag must be positive".into()));
                }
                if max_lag >= input_dim {
                    return Err(PreError::InvalidInput(format!(
                        "autocorr max_lag {max_lag} must be below the sequence length {input_dim}"
                    )));
                }
            }
            FeatureKind::Lag1Products if input_dim < 2 => {
                return Err(PreError::InvalidInput("lag-1 products need input dimension >= 2".into()));
            }
            _ => {}
        }
        Ok(Self { kind, input_dim })
    }

    pub fn identity(input_dim: usize) -> Self {
        Self::new(FeatureKind::Identity, input_dim).expect("identity map on positive dimension")
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        match self.kind {
            FeatureKind::Identity => self.input_dim,
            FeatureKind::PolynomialDeg2 => 2 * self.input_dim,
            FeatureKind::AutoCorr { max_lag } => max_lag,
            FeatureKind::Lag1Products => self.input_dim - 1,
        }
    }

    /// Evaluates `f(x)` into a fresh vector.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.output_dim()];
        self.eval_into(x, &mut out)?;
        Ok(out)
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(PreError::DimensionMismatch {
                context: "feature input",
                expected: self.input_dim,
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(PreError::InvalidInput("feature input contains a non-finite value".into()));
        }
        debug_assert_eq!(out.len(), self.output_dim());
        match self.kind {
            FeatureKind::Identity => out.copy_from_slice(x),
            FeatureKind::PolynomialDeg2 => {
                let d = self.input_dim;
                out[..d].copy_from_slice(x);
                for (o, v) in out[d..].iter_mut().zip(x) {
                    *o = v * v;
                }
            }
            FeatureKind::AutoCorr { max_lag } => {
                let acf = autocorrelation(x, max_lag)?;
                out.copy_from_slice(&acf);
            }
            FeatureKind::Lag1Products => {
                for (o, pair) in out.iter_mut().zip(x.windows(2)) {
                    *o = pair[0] * pair[1];
                }
            }
        }
        Ok(())
    }
}

/// Biased sample autocorrelation at lags `1..=max_lag`: lag-`l` autocovariance
/// normalised by `n`, divided by the lag-0 autocovariance.
pub fn autocorrelation(x: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = x.len();
    if max_lag >= n {
        return Err(PreError::InvalidInput(format!(
            "autocorrelation lag {max_lag} needs more than {n} points"
        )));
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let c0: f64 = centered.iter().map(|v| v * v).sum();
    let scale = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let floor = n as f64 * (4.0 * f64::EPSILON * scale).powi(2);
    if c0 <= floor {
        return Err(PreError::DegenerateInput(
            "autocorrelation of a constant sequence (zero variance)".into(),
        ));
    }
    Ok((1..=max_lag)
        .map(|lag| {
            let cl: f64 = centered[..n - lag]
                .iter()
                .zip(&centered[lag..])
                .map(|(a, b)| a * b)
                .sum();
            cl / c0
        })
        .collect())
}
