use nalgebra::{DMatrix, DVector};

use crate::error::{PreError, Result};

/// Default subspace rank of the singular-spectrum baseline.
pub const SST_DEFAULT_RANK: usize = 20;

/// Least-squares AR(`order`) coefficients of a mean-centred window.
pub fn fit_ar(y: &[f64], order: usize) -> Result<Vec<f64>> {
    if order == 0 {
        return Err(PreError::InvalidInput("AR order must be positive".into()));
    }
    if y.len() < 2 * order {
        return Err(PreError::InvalidInput(format!(
            "AR({order}) needs at least {} observations for an overdetermined fit, got {}",
            2 * order,
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(PreError::InvalidInput("window contains a non-finite value".into()));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let c: Vec<f64> = y.iter().map(|v| v - mean).collect();
    let rows = c.len() - order;
    let x = DMatrix::from_fn(rows, order, |r, j| c[order + r - 1 - j]);
    let target = DVector::from_fn(rows, |r, _| c[order + r]);
    let svd = x.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin <= 1e-10 * smax {
        return Err(PreError::DegenerateInput(
            "AR regression is singular (constant or degenerate window)".into(),
        ));
    }
    let coef = svd
        .solve(&target, 0.0)
        .map_err(|e| PreError::DegenerateInput(format!("AR regression failed: {e}")))?;
    Ok(coef.iter().copied().collect())
}

/// `||a_p - a_q||` between AR(`order`) fits of the two windows.
pub fn autocorr_distance(y_p: &[f64], y_q: &[f64], order: usize) -> Result<f64> {
    let a = fit_ar(y_p, order)?;
    let b = fit_ar(y_q, order)?;
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

/// `window x (n - window + 1)` Hankel trajectory matrix; column `c` is `y[c..c + window]`.
pub fn trajectory_matrix(y: &[f64], window: usize) -> Result<DMatrix<f64>> {
    if window == 0 || window > y.len() {
        return Err(PreError::InvalidInput(format!(
            "trajectory window {window} must lie in 1..={}",
            y.len()
        )));
    }
    let cols = y.len() - window + 1;
    Ok(DMatrix::from_fn(window, cols, |r, c| y[c + r]))
}

/// Top-`rank` left singular vectors of the trajectory matrix.
pub fn leading_subspace(y: &[f64], window: usize, rank: usize) -> Result<DMatrix<f64>> {
    let m = trajectory_matrix(y, window)?;
    if rank == 0 || rank > m.nrows().min(m.ncols()) {
        return Err(PreError::InvalidInput(format!(
            "subspace rank {rank} exceeds the trajectory matrix dimensions {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let svd = m.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let smax = svd.singular_values[order[0]];
    let s_rank = svd.singular_values[order[rank - 1]];
    if !(smax > 0.0) || s_rank <= 1e-10 * smax {
        return Err(PreError::DegenerateInput(format!(
            "subspace rank {rank} exceeds the numerical rank of the trajectory matrix"
        )));
    }
    let mut out = DMatrix::zeros(window, rank);
    for (dst, &src) in order.iter().take(rank).enumerate() {
        out.set_column(dst, &u.column(src));
    }
    Ok(out)
}

/// `1 - sigma_max(U_p^T U_q)`: one minus the largest principal cosine between
/// the leading trajectory subspaces.
pub fn sst_distance(y_p: &[f64], y_q: &[f64], window: usize, rank: usize) -> Result<f64> {
    let up = leading_subspace(y_p, window, rank)?;
    let uq = leading_subspace(y_q, window, rank)?;
    let cross = up.tr_mul(&uq);
    let smax = cross.singular_values().max();
    Ok((1.0 - smax).clamp(0.0, 1.0))
}
