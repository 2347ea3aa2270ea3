use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use postratio::model::{read_numeric_csv, read_series_csv, Design, ProbabilityFn};
use postratio::{FeatureKind, FeatureMap, LogLikelihood, PriorSampleSet};

use crate::error::CliError;

/// `identity` | `poly2` | `autocorr:<L>` | `lag1`.
pub fn parse_feature(spec: &str) -> Result<FeatureKind, CliError> {
    let bad = || CliError::Usage(format!("--feature: unrecognised spec '{spec}' (identity | poly2 | autocorr:<L> | lag1)"));
    match spec.trim() {
        "identity" => Ok(FeatureKind::Identity),
        "poly2" => Ok(FeatureKind::PolynomialDeg2),
        "lag1" => Ok(FeatureKind::Lag1Products),
        s => {
            let lag = s.strip_prefix("autocorr:").ok_or_else(bad)?;
            let max_lag: usize = lag.trim().parse().map_err(|_| bad())?;
            if max_lag == 0 {
                return Err(bad());
            }
            Ok(FeatureKind::AutoCorr { max_lag })
        }
    }
}

pub fn feature_map(flag: &str, kind: FeatureKind, input_dim: usize) -> Result<FeatureMap, CliError> {
    FeatureMap::new(kind, input_dim).map_err(|e| CliError::Usage(format!("{flag}: {e}")))
}

#[derive(Debug, Clone, PartialEq)]
pub enum LikelihoodSpec {
    Unit,
    Gaussian {
        y: PathBuf,
        sigma: f64,
        replicate: Option<usize>,
    },
    Blackbox(PathBuf),
}

/// `unit` | `gaussian:y=<path>,sigma=<v>[,replicate=<g>]` | `blackbox:<path>`.
pub fn parse_likelihood(flag: &str, spec: &str) -> Result<LikelihoodSpec, CliError> {
    let spec = spec.trim();
    if spec == "unit" {
        return Ok(LikelihoodSpec::Unit);
    }
    if let Some(path) = spec.strip_prefix("blackbox:") {
        if path.is_empty() {
            return Err(CliError::Usage(format!("{flag}: blackbox needs a table path")));
        }
        return Ok(LikelihoodSpec::Blackbox(PathBuf::from(path)));
    }
    let Some(body) = spec.strip_prefix("gaussian:") else {
        return Err(CliError::Usage(format!(
            "{flag}: unrecognised spec '{spec}' (unit | gaussian:y=<path>,sigma=<v>[,replicate=<g>] | blackbox:<path>)"
        )));
    };
    let mut y = None;
    let mut sigma = None;
    let mut replicate = None;
    for part in body.split(',') {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("{flag}: expected key=value, found '{part}'")))?;
        match key.trim() {
            "y" => y = Some(PathBuf::from(value.trim())),
            "sigma" => {
                let s: f64 = value
                    .trim()
                    .parse()
                    .map_err(|_| CliError::Usage(format!("{flag}: sigma '{value}' is not a number")))?;
                if !(s > 0.0 && s.is_finite()) {
                    return Err(CliError::Usage(format!("{flag}: sigma must be positive")));
                }
                sigma = Some(s);
            }
            "replicate" => {
                let g: usize = value
                    .trim()
                    .parse()
                    .map_err(|_| CliError::Usage(format!("{flag}: replicate '{value}' is not a count")))?;
                if g == 0 {
                    return Err(CliError::Usage(format!("{flag}: replicate must be positive")));
                }
                replicate = Some(g);
            }
            other => return Err(CliError::Usage(format!("{flag}: unknown gaussian key '{other}'"))),
        }
    }
    match (y, sigma) {
        (Some(y), Some(sigma)) => Ok(LikelihoodSpec::Gaussian { y, sigma, replicate }),
        _ => Err(CliError::Usage(format!("{flag}: gaussian needs both y=<path> and sigma=<v>"))),
    }
}

fn open(path: &Path) -> Result<std::fs::File, CliError> {
    std::fs::File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn read_samples(path: &Path) -> Result<PriorSampleSet, CliError> {
    PriorSampleSet::from_csv_reader(open(path)?).map_err(|e| CliError::from_pre(&path.display().to_string(), e))
}

pub fn read_series(path: &Path) -> Result<Vec<f64>, CliError> {
    read_series_csv(open(path)?).map_err(|e| CliError::from_pre(&path.display().to_string(), e))
}

/// Builds a likelihood for fit-style commands; black boxes are rejected.
pub fn build_likelihood(flag: &str, spec: &LikelihoodSpec) -> Result<LogLikelihood, CliError> {
    match spec {
        LikelihoodSpec::Unit => Ok(LogLikelihood::Unit),
        LikelihoodSpec::Gaussian { y, sigma, replicate } => {
            let values = read_series(y)?;
            let design = match replicate {
                Some(times) => Design::Replicate { times: *times },
                None => Design::Identity,
            };
            LogLikelihood::gaussian(values, design, *sigma)
                .map_err(|e| CliError::Data(format!("{flag} ({}): {e}", y.display())))
        }
        LikelihoodSpec::Blackbox(_) => Err(CliError::Usage(format!(
            "{flag}: blackbox likelihoods are only accepted by the explain command"
        ))),
    }
}

fn row_key(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| (v + 0.0).to_bits()).collect()
}

/// Black box backed by a probability table with one row per `x_loc` row.
/// Lookups of rows absent from `x_loc` return NaN, which the extraction
/// rejects.
pub fn table_blackbox(path: &Path, x_loc: &PriorSampleSet) -> Result<ProbabilityFn, CliError> {
    let name = path.display().to_string();
    let rows = read_numeric_csv(open(path)?).map_err(|e| CliError::from_pre(&name, e))?;
    if rows.len() != x_loc.len() {
        return Err(CliError::Data(format!(
            "{name}: table has {} rows but x_loc has {}",
            rows.len(),
            x_loc.len()
        )));
    }
    let mut table: HashMap<Vec<u64>, f64> = HashMap::with_capacity(rows.len());
    for ((line, row), x) in rows.iter().zip(x_loc.rows()) {
        if row.len() != 1 {
            return Err(CliError::Data(format!("{name}: row {line}: expected one probability column")));
        }
        let p = row[0];
        if !(0.0..=1.0).contains(&p) {
            return Err(CliError::Data(format!("{name}: row {line}: {p} is not a probability")));
        }
        if let Some(prev) = table.insert(row_key(x), p) {
            if prev != p {
                return Err(CliError::Data(format!(
                    "{name}: row {line}: duplicate x_loc row with a different probability"
                )));
            }
        }
    }
    let table = Arc::new(table);
    Ok(Arc::new(move |x: &[f64]| table.get(&row_key(x)).copied().unwrap_or(f64::NAN)))
}

/// Comma-separated list of numbers, e.g. a reference parameter.
pub fn parse_vector(flag: &str, s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Usage(format!("{flag}: '{t}' is not a finite number")))
        })
        .collect()
}
