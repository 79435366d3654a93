//! Sparse regression of `Ẋ` onto `Θ(X)`.

mod cv;
mod lasso;
mod lstsq;
mod stlsq;

use nalgebra::{DMatrix, DVector};

pub use cv::{cross_validate, CvReport, LambdaGrid};
pub use lasso::{CdParams, ZERO_SNAP};
pub(crate) use lasso::Design;
pub use lstsq::lstsq;

use crate::error::{Error, Result};

/// Sparse coefficient matrix `Ξ` (`p × targets`).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCoefficients {
    pub xi: DMatrix<f64>,
    /// λ (LASSO) or threshold (STLSQ) per target.
    pub lambda_used: Vec<f64>,
    /// Per-feature scale used internally (zero for constant columns).
    pub scaling: Vec<f64>,
    /// Per-target convergence flag; `false` means the iteration budget ran out.
    pub converged: Vec<bool>,
}

impl SparseCoefficients {
    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|c| *c)
    }

    pub fn nonzeros(&self, target: usize) -> usize {
        self.xi.column(target).iter().filter(|v| **v != 0.0).count()
    }
}

/// LASSO with one λ shared by all targets.
pub fn lasso_fit(
    theta: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    lambda: f64,
    params: &CdParams,
) -> Result<SparseCoefficients> {
    lasso_fit_per_target(theta, targets, &vec![lambda; targets.ncols()], params)
}

/// LASSO with a separate λ per target column.
pub fn lasso_fit_per_target(
    theta: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    lambdas: &[f64],
    params: &CdParams,
) -> Result<SparseCoefficients> {
    if lambdas.len() != targets.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "{} lambdas for {} targets",
            lambdas.len(),
            targets.ncols()
        )));
    }
    if lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(Error::Config("lambda must be finite and ≥ 0".into()));
    }
    if !(params.tol > 0.0) {
        return Err(Error::Config("tolerance must be > 0".into()));
    }
    let design = Design::new(theta, targets)?;
    let mut xi = DMatrix::zeros(theta.ncols(), targets.ncols());
    let mut converged = Vec::with_capacity(targets.ncols());
    for (t, &lambda) in lambdas.iter().enumerate() {
        let out = design.solve(t, lambda, params, None, None);
        if !out.converged {
            log::warn!(
                "coordinate descent stopped after {} sweeps on target {t} (λ = {lambda:e})",
                out.sweeps
            );
        }
        xi.set_column(t, &design.destandardize(t, &out.beta));
        converged.push(out.converged);
    }
    Ok(SparseCoefficients {
        xi,
        lambda_used: lambdas.to_vec(),
        scaling: design.feature_scales(),
        converged,
    })
}

/// Sequentially thresholded least squares, applied per target column.
pub fn stlsq_fit(
    theta: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    threshold: f64,
    max_sweeps: usize,
) -> Result<SparseCoefficients> {
    if !(threshold.is_finite() && threshold >= 0.0) {
        return Err(Error::Config("STLSQ threshold must be finite and ≥ 0".into()));
    }
    if targets.nrows() != theta.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "library has {} rows, targets {}",
            theta.nrows(),
            targets.nrows()
        )));
    }
    let mut xi = DMatrix::zeros(theta.ncols(), targets.ncols());
    for t in 0..targets.ncols() {
        let y: DVector<f64> = targets.column(t).into_owned();
        xi.set_column(t, &stlsq::stlsq_single(theta, &y, threshold, max_sweeps, t)?);
    }
    let m = theta.nrows() as f64;
    let scaling = theta
        .column_iter()
        .map(|c| {
            let mean = c.sum() / m;
            (c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m).sqrt()
        })
        .collect();
    Ok(SparseCoefficients {
        xi,
        lambda_used: vec![threshold; targets.ncols()],
        scaling,
        converged: vec![true; targets.ncols()],
    })
}
