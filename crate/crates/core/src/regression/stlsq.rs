//! Sequentially thresholded least squares.

use nalgebra::{DMatrix, DVector};

use super::lstsq::lstsq;
use crate::error::{Error, Result};

/// Fits one target: least squares, zero every `|ξ| < threshold`, refit on the
/// survivors, until the support stops changing or `max_sweeps` is spent.
pub(crate) fn stlsq_single(
    theta: &DMatrix<f64>,
    y: &DVector<f64>,
    threshold: f64,
    max_sweeps: usize,
    target: usize,
) -> Result<DVector<f64>> {
    let p = theta.ncols();
    let mut xi = lstsq(theta, y)?;
    let mut support: Vec<bool> = (0..p).map(|j| xi[j] != 0.0).collect();
    for _ in 0..max_sweeps.max(1) {
        let next: Vec<bool> = (0..p).map(|j| support[j] && xi[j].abs() >= threshold).collect();
        let cols: Vec<usize> = (0..p).filter(|&j| next[j]).collect();
        if cols.is_empty() {
            return Err(Error::EmptyModel { target });
        }
        let stable = next == support;
        support = next;
        let sub = theta.select_columns(&cols);
        let coef = lstsq(&sub, y)?;
        xi = DVector::zeros(p);
        for (k, &j) in cols.iter().enumerate() {
            xi[j] = coef[k];
        }
        if stable {
            break;
        }
    }
    Ok(xi)
}
