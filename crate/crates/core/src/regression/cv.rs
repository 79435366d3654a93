//! Blocked time-series cross-validation of the LASSO penalty.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::lasso::{CdParams, Design};
use crate::error::{Error, Result};

/// Minimum rows per fold.
const MIN_ROWS_PER_FOLD: usize = 10;

/// λ values to evaluate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LambdaGrid {
    /// `n` log-spaced values per target from `λ_max` down to `ratio·λ_max`.
    Auto { n: usize, ratio: f64 },
    /// The same absolute values for every target.
    Explicit { values: Vec<f64> },
}

impl Default for LambdaGrid {
    fn default() -> Self {
        LambdaGrid::Auto { n: 20, ratio: 1e-4 }
    }
}

impl LambdaGrid {
    fn resolve(&self, lambda_max: f64) -> Result<Vec<f64>> {
        let mut grid = match self {
            LambdaGrid::Auto { n, ratio } => {
                if *n == 0 || !(*ratio > 0.0 && *ratio < 1.0) {
                    return Err(Error::Config(format!(
                        "automatic λ grid needs n ≥ 1 and 0 < ratio < 1, got n={n}, ratio={ratio}"
                    )));
                }
                if *n == 1 || lambda_max == 0.0 {
                    vec![lambda_max]
                } else {
                    let lo = ratio.ln();
                    (0..*n)
                        .map(|i| lambda_max * (lo * i as f64 / (*n - 1) as f64).exp())
                        .collect()
                }
            }
            LambdaGrid::Explicit { values } => {
                if values.is_empty() || values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(Error::Config("λ grid must be non-empty, finite and ≥ 0".into()));
                }
                values.clone()
            }
        };
        grid.sort_by(|a, b| b.total_cmp(a));
        grid.dedup();
        Ok(grid)
    }
}

/// Cross-validation results per target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    /// Strictly decreasing λ values per target.
    pub lambda_grid: Vec<Vec<f64>>,
    /// Mean validation MSE per target per λ.
    pub mean_mse: Vec<Vec<f64>>,
    /// Standard error of the fold MSEs per target per λ.
    pub se_mse: Vec<Vec<f64>>,
    /// λ picked by the one-standard-error rule.
    pub chosen: Vec<f64>,
    pub chosen_index: Vec<usize>,
    pub folds: usize,
}

fn rows_of(mat: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    mat.select_rows(rows)
}

/// Contiguous-block K-fold cross-validation over a λ grid, per target.
///
/// The chosen λ is the largest one whose mean validation MSE lies within one
/// standard error of the minimum.
pub fn cross_validate(
    theta: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    grid: &LambdaGrid,
    folds: usize,
    params: &CdParams,
) -> Result<CvReport> {
    if folds < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {folds}")));
    }
    let m = theta.nrows();
    if m < folds * MIN_ROWS_PER_FOLD {
        return Err(Error::InsufficientData(format!(
            "{m} rows cannot fill {folds} folds of at least {MIN_ROWS_PER_FOLD}"
        )));
    }
    let full = Design::new(theta, targets)?;
    let q = targets.ncols();
    let grids: Vec<Vec<f64>> = (0..q)
        .map(|t| grid.resolve(full.lambda_max(t)))
        .collect::<Result<_>>()?;

    // fold_mse[t][l][f]
    let mut fold_mse = vec![vec![vec![0.0; folds]; 0]; q];
    for t in 0..q {
        fold_mse[t] = vec![vec![0.0; folds]; grids[t].len()];
    }

    for f in 0..folds {
        let start = f * m / folds;
        let end = (f + 1) * m / folds;
        let train: Vec<usize> = (0..start).chain(end..m).collect();
        let valid: Vec<usize> = (start..end).collect();
        let design = Design::new(&rows_of(theta, &train), &rows_of(targets, &train))?;
        let theta_v = rows_of(theta, &valid);
        let y_v = rows_of(targets, &valid);
        for t in 0..q {
            let mut warm: Option<Vec<f64>> = None;
            for (l, &lambda) in grids[t].iter().enumerate() {
                let out = design.solve(t, lambda, params, warm.as_deref(), None);
                let xi = design.destandardize(t, &out.beta);
                let pred = &theta_v * &xi;
                let mse = pred
                    .iter()
                    .zip(y_v.column(t).iter())
                    .map(|(p, y)| (p - y) * (p - y))
                    .sum::<f64>()
                    / valid.len() as f64;
                fold_mse[t][l][f] = mse;
                warm = Some(out.beta);
            }
        }
    }

    let mut mean_mse = Vec::with_capacity(q);
    let mut se_mse = Vec::with_capacity(q);
    let mut chosen = Vec::with_capacity(q);
    let mut chosen_index = Vec::with_capacity(q);
    for t in 0..q {
        let means: Vec<f64> = fold_mse[t]
            .iter()
            .map(|v| v.iter().sum::<f64>() / folds as f64)
            .collect();
        let ses: Vec<f64> = fold_mse[t]
            .iter()
            .zip(&means)
            .map(|(v, mean)| {
                let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (folds - 1) as f64;
                (var / folds as f64).sqrt()
            })
            .collect();
        let best = (0..means.len())
            .min_by(|&a, &b| means[a].total_cmp(&means[b]))
            .expect("grid is non-empty");
        let limit = means[best] + ses[best];
        let pick = (0..means.len())
            .find(|&l| means[l] <= limit)
            .unwrap_or(best);
        chosen.push(grids[t][pick]);
        chosen_index.push(pick);
        mean_mse.push(means);
        se_mse.push(ses);
    }

    Ok(CvReport {
        lambda_grid: grids,
        mean_mse,
        se_mse,
        chosen,
        chosen_index,
        folds,
    })
}
