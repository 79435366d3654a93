//! Cyclic coordinate descent for the LASSO on standardized features.
//!
//! Minimizes `1/(2m)·‖y_c − Zβ‖² + λ‖β‖₁` where `Z` holds the non-constant
//! library columns centered and scaled to unit variance, and `y_c` is the
//! centered target. A constant column (when present) carries the unpenalized
//! intercept. Updates run on the Gram matrix `ZᵀZ/m`, so one sweep costs
//! `O(k²)` regardless of the sample count.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficients below this magnitude (original units) are set to exactly zero.
pub const ZERO_SNAP: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct CdParams {
    /// Stop when the largest standardized coefficient change in a sweep is below this.
    pub tol: f64,
    /// Sweep budget.
    pub max_iter: usize,
}

impl Default for CdParams {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 20_000,
        }
    }
}

#[inline]
pub(crate) fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Standardized design shared by every target and every λ.
#[derive(Debug, Clone)]
pub(crate) struct Design {
    p: usize,
    /// Non-constant (penalized) columns of the original library.
    active: Vec<usize>,
    means: Vec<f64>,
    scales: Vec<f64>,
    /// Constant column carrying the intercept, with its value.
    intercept: Option<(usize, f64)>,
    gram: DMatrix<f64>,
    zty: DMatrix<f64>,
    y_means: Vec<f64>,
    y_sq: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct CdOutcome {
    pub beta: Vec<f64>,
    pub converged: bool,
    pub sweeps: usize,
}

impl Design {
    pub fn new(theta: &DMatrix<f64>, targets: &DMatrix<f64>) -> Result<Self> {
        let (m, p) = theta.shape();
        if targets.nrows() != m {
            return Err(Error::ShapeMismatch(format!(
                "library has {m} rows, targets {}",
                targets.nrows()
            )));
        }
        if m == 0 {
            return Err(Error::InsufficientData("no rows to fit".into()));
        }
        if theta.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("regression inputs contain NaN or infinity".into()));
        }
        let mf = m as f64;

        let mut intercept = None;
        let mut active = Vec::new();
        let mut col_stats = Vec::with_capacity(p);
        for j in 0..p {
            let col = theta.column(j);
            let mean = col.sum() / mf;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / mf;
            let sd = var.sqrt();
            let constant = sd <= 1e-12 * mean.abs() || sd == 0.0;
            if constant {
                if intercept.is_none() && mean != 0.0 {
                    intercept = Some((j, mean));
                }
            } else {
                active.push(j);
            }
            col_stats.push((mean, sd));
        }
        let center = intercept.is_some();

        let mut means = Vec::with_capacity(active.len());
        let mut scales = Vec::with_capacity(active.len());
        for &j in &active {
            let (mean, sd) = col_stats[j];
            if center {
                means.push(mean);
                scales.push(sd);
            } else {
                let rms = (theta.column(j).norm_squared() / mf).sqrt();
                means.push(0.0);
                scales.push(rms);
            }
        }
        let k = active.len();
        let z = DMatrix::from_fn(m, k, |i, a| (theta[(i, active[a])] - means[a]) / scales[a]);

        let q = targets.ncols();
        let y_means: Vec<f64> = (0..q)
            .map(|t| if center { targets.column(t).sum() / mf } else { 0.0 })
            .collect();
        let yc = DMatrix::from_fn(m, q, |i, t| targets[(i, t)] - y_means[t]);
        let y_sq = (0..q).map(|t| yc.column(t).norm_squared() / mf).collect();

        let gram = z.tr_mul(&z) / mf;
        let zty = z.tr_mul(&yc) / mf;
        Ok(Self {
            p,
            active,
            means,
            scales,
            intercept,
            gram,
            zty,
            y_means,
            y_sq,
        })
    }

    /// Smallest λ for which every penalized coefficient is zero.
    pub fn lambda_max(&self, target: usize) -> f64 {
        self.zty
            .column(target)
            .iter()
            .fold(0.0, |acc: f64, v| acc.max(v.abs()))
    }

    /// Standardized-space objective `½(yᵀy/m − 2cᵀβ + βᵀGβ) + λ‖β‖₁`.
    pub fn objective(&self, target: usize, beta: &[f64], lambda: f64) -> f64 {
        let b = DVector::from_column_slice(beta);
        let c = self.zty.column(target);
        let quad = (b.transpose() * &self.gram * &b)[(0, 0)];
        0.5 * (self.y_sq[target] - 2.0 * c.dot(&b) + quad) + lambda * b.lp_norm(1)
    }

    pub fn solve(
        &self,
        target: usize,
        lambda: f64,
        params: &CdParams,
        warm: Option<&[f64]>,
        mut trace: Option<&mut Vec<f64>>,
    ) -> CdOutcome {
        let k = self.active.len();
        let mut beta = warm.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; k]);
        // g = Gβ, maintained incrementally.
        let mut g: Vec<f64> = (0..k)
            .map(|i| (0..k).map(|j| self.gram[(i, j)] * beta[j]).sum())
            .collect();
        let c = self.zty.column(target);

        let update = |j: usize, beta: &mut [f64], g: &mut [f64]| -> f64 {
            let gjj = self.gram[(j, j)];
            if gjj <= 0.0 {
                return 0.0;
            }
            let rho = c[j] - g[j] + gjj * beta[j];
            let new = soft_threshold(rho, lambda) / gjj;
            let delta = new - beta[j];
            if delta != 0.0 {
                beta[j] = new;
                for (i, gi) in g.iter_mut().enumerate() {
                    *gi += self.gram[(i, j)] * delta;
                }
            }
            delta.abs()
        };

        let mut sweeps = 0;
        let mut converged = false;
        if let Some(t) = trace.as_deref_mut() {
            t.push(self.objective(target, &beta, lambda));
        }
        'outer: while sweeps < params.max_iter {
            let mut max_change = 0.0f64;
            for j in 0..k {
                max_change = max_change.max(update(j, &mut beta, &mut g));
            }
            sweeps += 1;
            if let Some(t) = trace.as_deref_mut() {
                t.push(self.objective(target, &beta, lambda));
            }
            if max_change < params.tol {
                converged = true;
                break;
            }
            // Iterate on the current support before the next full sweep.
            let support: Vec<usize> = (0..k).filter(|&j| beta[j] != 0.0).collect();
            loop {
                if sweeps >= params.max_iter {
                    break 'outer;
                }
                let mut change = 0.0f64;
                for &j in &support {
                    change = change.max(update(j, &mut beta, &mut g));
                }
                sweeps += 1;
                if let Some(t) = trace.as_deref_mut() {
                    t.push(self.objective(target, &beta, lambda));
                }
                if change < params.tol {
                    break;
                }
            }
        }
        CdOutcome {
            beta,
            converged,
            sweeps,
        }
    }

    /// Coefficients in original library units, without zero snapping.
    pub fn destandardize_raw(&self, target: usize, beta: &[f64]) -> DVector<f64> {
        let mut xi = DVector::zeros(self.p);
        let mut offset = self.y_means[target];
        for (a, &j) in self.active.iter().enumerate() {
            let b = beta[a] / self.scales[a];
            xi[j] = b;
            offset -= b * self.means[a];
        }
        if let Some((j, value)) = self.intercept {
            xi[j] = offset / value;
        }
        xi
    }

    pub fn destandardize(&self, target: usize, beta: &[f64]) -> DVector<f64> {
        self.destandardize_raw(target, beta)
            .map(|v| if v.abs() < ZERO_SNAP { 0.0 } else { v })
    }

    pub fn feature_scales(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.p];
        for (a, &j) in self.active.iter().enumerate() {
            s[j] = self.scales[a];
        }
        s
    }

    #[cfg(test)]
    pub fn standardized_prediction(&self, theta: &DMatrix<f64>, target: usize, beta: &[f64]) -> DVector<f64> {
        DVector::from_fn(theta.nrows(), |i, _| {
            self.y_means[target]
                + self
                    .active
                    .iter()
                    .enumerate()
                    .map(|(a, &j)| beta[a] * (theta[(i, j)] - self.means[a]) / self.scales[a])
                    .sum::<f64>()
        })
    }
}
