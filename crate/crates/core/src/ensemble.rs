//! Bootstrap ensembles of sparse fits (E-SINDy).
//!
//! Rows of `(Θ, Ẋ)` are resampled jointly with replacement, each resample is
//! fit with the configured solver, and the coefficient samples are combined
//! either by inclusion-probability-gated medians or by picking the single
//! model with the lowest out-of-bag error.
//!
//! Model `i` draws its rows from a ChaCha8 stream `i` of the master seed, so the
//! result does not depend on how the fits are scheduled across threads.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::library::{FeatureLibrary, Term};
use crate::regression::{
    cross_validate, lasso_fit_per_target, stlsq_fit, CdParams, CvReport, LambdaGrid,
    SparseCoefficients,
};
use crate::signal::MeasurementSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    MedianInclusion,
    BestByCv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SolverConfig {
    Lasso {
        /// Fixed λ for every target; chosen by cross-validation when absent.
        #[serde(default)]
        lambda: Option<f64>,
        #[serde(default)]
        grid: LambdaGrid,
        #[serde(default = "default_folds")]
        folds: usize,
        #[serde(default)]
        cd: CdParams,
    },
    Stlsq {
        threshold: f64,
        #[serde(default = "default_max_sweeps")]
        max_sweeps: usize,
    },
}

fn default_folds() -> usize {
    5
}

fn default_max_sweeps() -> usize {
    10
}

impl SolverConfig {
    pub fn lasso_cv() -> Self {
        SolverConfig::Lasso {
            lambda: None,
            grid: LambdaGrid::default(),
            folds: default_folds(),
            cd: CdParams::default(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SolverConfig::Lasso { .. } => "lasso",
            SolverConfig::Stlsq { .. } => "stlsq",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub n_models: usize,
    pub sample_fraction: f64,
    pub inclusion_threshold: f64,
    pub aggregation: Aggregation,
    /// Supplied by the scenario's `regression` section when loaded from a config.
    #[serde(skip, default = "SolverConfig::lasso_cv")]
    pub solver: SolverConfig,
    /// Derived from the scenario seed when loaded from a config.
    #[serde(skip)]
    pub rng_seed: u64,
    /// Fit the full data once per model without resampling.
    pub bypass_resampling: bool,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            n_models: 100,
            sample_fraction: 1.0,
            inclusion_threshold: 0.6,
            aggregation: Aggregation::MedianInclusion,
            solver: SolverConfig::lasso_cv(),
            rng_seed: 0,
            bypass_resampling: false,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_models == 0 {
            return Err(Error::Config("n_models must be ≥ 1".into()));
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return Err(Error::Config("sample_fraction must lie in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.inclusion_threshold) {
            return Err(Error::Config("inclusion_threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDiagnostics {
    /// Index of the bootstrap draw.
    pub model: usize,
    pub oob_rows: usize,
    /// Out-of-bag MSE per target (all rows when no row was left out).
    pub mse: Vec<f64>,
    /// Σ_t MSE_t / Var(ẋ_t), the selection score for `best_by_cv`.
    pub score: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct EnsembleModel {
    /// One `p × targets` matrix per successful fit.
    pub coefficient_samples: Vec<DMatrix<f64>>,
    pub inclusion_prob: DMatrix<f64>,
    pub aggregated_xi: DMatrix<f64>,
    pub terms: Vec<Term>,
    pub term_labels: Vec<String>,
    pub target_names: Vec<String>,
    pub diagnostics: Vec<ModelDiagnostics>,
    /// `(model index, error message)` for fits that failed.
    pub failures: Vec<(usize, String)>,
    /// Per-target λ (LASSO) or threshold (STLSQ).
    pub lambdas: Vec<f64>,
    pub cv: Option<CvReport>,
    pub aggregation: Aggregation,
    pub inclusion_threshold: f64,
    /// Model chosen under `best_by_cv`.
    pub selected_model: Option<usize>,
}

impl EnsembleModel {
    pub fn n_turbines(&self) -> usize {
        self.target_names.len() / 2
    }
}

pub fn target_names(r: usize) -> Vec<String> {
    (1..=r)
        .map(|i| format!("delta_dot_{i}"))
        .chain((1..=r).map(|i| format!("omega_dot_{i}")))
        .collect()
}

fn fit_once(
    theta: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    solver: &SolverConfig,
    lambdas: &[f64],
) -> Result<SparseCoefficients> {
    match solver {
        SolverConfig::Lasso { cd, .. } => lasso_fit_per_target(theta, targets, lambdas, cd),
        SolverConfig::Stlsq {
            threshold,
            max_sweeps,
        } => stlsq_fit(theta, targets, *threshold, *max_sweeps),
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Fraction of samples with a nonzero entry, entrywise.
pub fn inclusion_probabilities(samples: &[DMatrix<f64>], p: usize, q: usize) -> DMatrix<f64> {
    let n = samples.len() as f64;
    DMatrix::from_fn(p, q, |i, j| {
        samples.iter().filter(|s| s[(i, j)] != 0.0).count() as f64 / n
    })
}

/// Median over the nonzero samples of each entry whose inclusion probability
/// reaches `p_min`; zero elsewhere.
pub fn median_inclusion(samples: &[DMatrix<f64>], inclusion_prob: &DMatrix<f64>, p_min: f64) -> DMatrix<f64> {
    DMatrix::from_fn(inclusion_prob.nrows(), inclusion_prob.ncols(), |i, j| {
        if inclusion_prob[(i, j)] < p_min {
            return 0.0;
        }
        let mut nz: Vec<f64> = samples.iter().map(|s| s[(i, j)]).filter(|v| *v != 0.0).collect();
        if nz.is_empty() {
            0.0
        } else {
            median(&mut nz)
        }
    })
}

struct Draw {
    model: usize,
    fit: Result<SparseCoefficients>,
    oob: Vec<usize>,
}

pub fn fit_ensemble(lib: &FeatureLibrary, ms: &MeasurementSet, cfg: &EnsembleConfig) -> Result<EnsembleModel> {
    cfg.validate()?;
    let theta = &lib.theta;
    let targets = &ms.xdot;
    let m = theta.nrows();
    if targets.nrows() != m {
        return Err(Error::ShapeMismatch(format!(
            "library has {m} rows, measurements {}",
            targets.nrows()
        )));
    }
    let q = targets.ncols();
    let p = theta.ncols();

    let (lambdas, cv) = match &cfg.solver {
        SolverConfig::Lasso {
            lambda: Some(l), ..
        } => (vec![*l; q], None),
        SolverConfig::Lasso {
            lambda: None,
            grid,
            folds,
            cd,
        } => {
            let rep = cross_validate(theta, targets, grid, *folds, cd)?;
            (rep.chosen.clone(), Some(rep))
        }
        SolverConfig::Stlsq { threshold, .. } => (vec![*threshold; q], None),
    };

    let n_draw = ((cfg.sample_fraction * m as f64).ceil() as usize).clamp(1, m);
    let draws: Vec<Draw> = (0..cfg.n_models)
        .into_par_iter()
        .map(|model| {
            if cfg.bypass_resampling {
                return Draw {
                    model,
                    fit: fit_once(theta, targets, &cfg.solver, &lambdas),
                    oob: Vec::new(),
                };
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
            rng.set_stream(model as u64);
            let rows: Vec<usize> = (0..n_draw).map(|_| rng.random_range(0..m)).collect();
            let mut drawn = vec![false; m];
            for &r in &rows {
                drawn[r] = true;
            }
            let oob = (0..m).filter(|&r| !drawn[r]).collect();
            let fit = fit_once(&theta.select_rows(&rows), &targets.select_rows(&rows), &cfg.solver, &lambdas);
            Draw { model, fit, oob }
        })
        .collect();

    let variances: Vec<f64> = (0..q)
        .map(|t| {
            let c = targets.column(t);
            let mean = c.mean();
            c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64
        })
        .collect();

    let mut samples = Vec::new();
    let mut diagnostics = Vec::new();
    let mut failures = Vec::new();
    for d in draws {
        match d.fit {
            Ok(fit) => {
                let rows: Vec<usize> = if d.oob.is_empty() { (0..m).collect() } else { d.oob };
                let pred = theta.select_rows(&rows) * &fit.xi;
                let mse: Vec<f64> = (0..q)
                    .map(|t| {
                        rows.iter()
                            .enumerate()
                            .map(|(k, &r)| {
                                let e = pred[(k, t)] - targets[(r, t)];
                                e * e
                            })
                            .sum::<f64>()
                            / rows.len() as f64
                    })
                    .collect();
                let score = mse
                    .iter()
                    .zip(&variances)
                    .map(|(e, v)| if *v > 0.0 { e / v } else { *e })
                    .sum();
                diagnostics.push(ModelDiagnostics {
                    model: d.model,
                    oob_rows: if rows.len() == m { 0 } else { rows.len() },
                    mse,
                    score,
                    converged: fit.all_converged(),
                });
                samples.push(fit.xi);
            }
            Err(e) => failures.push((d.model, e.to_string())),
        }
    }
    if 2 * failures.len() > cfg.n_models || samples.is_empty() {
        return Err(Error::EnsembleFailed {
            failed: failures.len(),
            total: cfg.n_models,
        });
    }

    let inclusion_prob = inclusion_probabilities(&samples, p, q);
    let (aggregated_xi, selected_model) = match cfg.aggregation {
        Aggregation::MedianInclusion => (median_inclusion(&samples, &inclusion_prob, cfg.inclusion_threshold), None),
        Aggregation::BestByCv => {
            let best = (0..diagnostics.len())
                .min_by(|&a, &b| diagnostics[a].score.total_cmp(&diagnostics[b].score))
                .expect("at least one successful fit");
            (samples[best].clone(), Some(diagnostics[best].model))
        }
    };

    Ok(EnsembleModel {
        coefficient_samples: samples,
        inclusion_prob,
        aggregated_xi,
        terms: lib.terms.clone(),
        term_labels: lib.labels(),
        target_names: target_names(q / 2),
        diagnostics,
        failures,
        lambdas,
        cv,
        aggregation: cfg.aggregation,
        inclusion_threshold: cfg.inclusion_threshold,
        selected_model,
    })
}

/// `Θ · Ξ_aggregated`.
pub fn predict_derivatives(model: &EnsembleModel, lib: &FeatureLibrary) -> Result<DMatrix<f64>> {
    if lib.theta.ncols() != model.aggregated_xi.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "library has {} columns, model {} rows",
            lib.theta.ncols(),
            model.aggregated_xi.nrows()
        )));
    }
    Ok(&lib.theta * &model.aggregated_xi)
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[derive(Serialize)]
struct EnsembleDump<'a> {
    terms: &'a [String],
    targets: &'a [String],
    aggregation: Aggregation,
    inclusion_threshold: f64,
    lambdas: &'a [f64],
    n_models: usize,
    selected_model: Option<usize>,
    inclusion_prob: Vec<Vec<f64>>,
    aggregated_xi: Vec<Vec<f64>>,
    per_model: &'a [ModelDiagnostics],
    failures: &'a [(usize, String)],
    cv: Option<&'a CvReport>,
}

impl EnsembleModel {
    pub fn to_json(&self) -> Result<String> {
        let dump = EnsembleDump {
            terms: &self.term_labels,
            targets: &self.target_names,
            aggregation: self.aggregation,
            inclusion_threshold: self.inclusion_threshold,
            lambdas: &self.lambdas,
            n_models: self.coefficient_samples.len(),
            selected_model: self.selected_model,
            inclusion_prob: to_rows(&self.inclusion_prob),
            aggregated_xi: to_rows(&self.aggregated_xi),
            per_model: &self.diagnostics,
            failures: &self.failures,
            cv: self.cv.as_ref(),
        };
        Ok(serde_json::to_string_pretty(&dump)?)
    }

    /// Heatmap data: rows = terms, columns = targets.
    pub fn write_coefficients_csv(&self, path: &std::path::Path) -> Result<()> {
        let header: Vec<String> = std::iter::once("term".to_string())
            .chain(self.target_names.iter().cloned())
            .collect();
        crate::io::write_matrix_csv(path, &header, Some(&self.term_labels), &self.aggregated_xi)
    }
}
