mod common;

use std::f64::consts::PI;
use std::time::Instant;

use common::{case3_library, restricted_oracle, support_of, true_xi};
use fo_locate::regression::{cross_validate, lasso_fit, lstsq, stlsq_fit, CdParams, LambdaGrid};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn exact_system() -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let (lib, _) = case3_library(30.0);
    let xi = true_xi(&lib);
    let y = &lib.theta * &xi;
    (lib.theta, y, xi)
}

#[test]
fn solvers_match_restricted_oracle_on_exact_system() {
    let start = Instant::now();
    let (theta, y, xi_true) = exact_system();
    let stlsq = stlsq_fit(&theta, &y, 0.05, 20).unwrap();
    let lasso = lasso_fit(&theta, &y, 1e-13, &CdParams { tol: 1e-14, max_iter: 200_000 }).unwrap();
    assert!(lasso.all_converged());
    for t in 0..y.ncols() {
        let truth: Vec<f64> = xi_true.column(t).iter().copied().collect();
        let support = support_of(&truth);
        let oracle = restricted_oracle(&theta, &y.column(t).into_owned(), &support);
        for (name, fit) in [("stlsq", &stlsq), ("lasso", &lasso)] {
            let est: Vec<f64> = fit.xi.column(t).iter().copied().collect();
            assert_eq!(support_of(&est), support, "{name} support, target {t}");
            let err = (fit.xi.column(t) - &oracle).amax();
            assert!(err < 1e-6, "{name} target {t}: {err:e}");
        }
    }
    assert!(start.elapsed().as_secs_f64() < 5.0);
}

fn tight() -> CdParams {
    CdParams {
        tol: 1e-13,
        max_iter: 500_000,
    }
}

#[test]
fn lasso_path_support_shrinks_with_lambda() {
    // Full-period sinusoids at distinct Fourier bins: the centered Gram matrix
    // is diagonal, so each coefficient is a soft threshold and leaves the
    // support exactly once as λ grows.
    let m = 1000;
    let theta = DMatrix::from_fn(m, 9, |i, j| {
        let t = i as f64 / m as f64;
        match j {
            0 => 1.0,
            _ if j % 2 == 1 => (2.0 * PI * (j as f64 + 2.0) * t).sin(),
            _ => (2.0 * PI * (j as f64 + 2.0) * t).cos(),
        }
    });
    let weights = [0.0, 2.0, -1.5, 1.0, 0.7, -0.4, 0.2, 0.1, 0.05];
    let y = DMatrix::from_fn(m, 1, |i, _| {
        (0..9).map(|j| weights[j] * theta[(i, j)]).sum::<f64>() + 0.01 * ((i * 37) % 11) as f64
    });
    let rep = cross_validate(&theta, &y, &LambdaGrid::Auto { n: 30, ratio: 1e-4 }, 5, &tight()).unwrap();
    let counts: Vec<usize> = rep.lambda_grid[0]
        .iter()
        .map(|&l| {
            let fit = lasso_fit(&theta, &y, l, &tight()).unwrap();
            assert!(fit.all_converged());
            fit.xi.column(0).iter().skip(1).filter(|v| **v != 0.0).count()
        })
        .collect();
    // Grid is decreasing in λ, so counts must be non-decreasing.
    assert!(counts.windows(2).all(|w| w[0] <= w[1]), "{counts:?}");
    assert_eq!(counts[0], 0);
    assert_eq!(*counts.last().unwrap(), 8);
}

#[test]
fn lasso_path_l1_norm_grows_as_lambda_falls() {
    // On the correlated farm library the support size need not be monotone,
    // but the standardized ℓ₁ norm of the solution always is.
    let (theta, y, _) = exact_system();
    let rep = cross_validate(&theta, &y, &LambdaGrid::default(), 5, &tight()).unwrap();
    for t in 0..y.ncols() {
        assert!(rep.lambda_grid[t].windows(2).all(|w| w[0] > w[1]));
        let norms: Vec<f64> = rep.lambda_grid[t]
            .iter()
            .map(|&l| {
                let fit = lasso_fit(&theta, &y.columns(t, 1).into_owned(), l, &tight()).unwrap();
                assert!(fit.all_converged());
                fit.xi.column(0).iter().zip(&fit.scaling).map(|(x, s)| (x * s).abs()).sum::<f64>()
            })
            .collect();
        assert_eq!(norms[0], 0.0, "target {t}");
        assert!(norms.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-9)), "target {t}: {norms:?}");
    }
}

#[test]
fn cv_on_exact_system_reaches_plateau() {
    let (theta, y, _) = exact_system();
    let grid = LambdaGrid::Auto { n: 40, ratio: 1e-12 };
    let rep = cross_validate(&theta, &y, &grid, 5, &tight()).unwrap();
    for t in 0..y.ncols() {
        let chosen = rep.mean_mse[t][rep.chosen_index[t]];
        assert!(chosen < 1e-8, "target {t}: {chosen:e}");
        // The one-standard-error pick sits on the low-error plateau, not at λ_max.
        assert!(chosen < 1e-8 * rep.mean_mse[t][0], "target {t}");
    }
}

#[test]
fn lstsq_agrees_with_oracle_on_full_rank() {
    let (theta, y, _) = exact_system();
    let b: DVector<f64> = y.column(4).into_owned();
    let all: Vec<usize> = (0..theta.ncols()).collect();
    let ours = lstsq(&theta, &b).unwrap();
    let oracle = restricted_oracle(&theta, &b, &all);
    assert!((ours - oracle).amax() < 1e-6);
}

fn design(m: usize, p: usize, seed: u64) -> DMatrix<f64> {
    DMatrix::from_fn(m, p, |i, j| {
        if j == 0 {
            1.0
        } else {
            let t = i as f64 * 0.05;
            (t * (0.3 + 0.41 * j as f64) + seed as f64 * 0.1 * j as f64).sin() * (1.0 + j as f64)
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lasso_predictions_match_for_any_scaling(seed in 0u64..100, scale in 0.01f64..100.0) {
        // Rescaling a column rescales its coefficient inversely; predictions unchanged.
        let theta = design(300, 6, seed);
        let y = DMatrix::from_fn(300, 1, |i, _| 0.5 + 2.0 * theta[(i, 2)] - theta[(i, 4)]);
        let mut scaled = theta.clone();
        scaled.column_mut(3).scale_mut(scale);
        let a = lasso_fit(&theta, &y, 0.01, &CdParams::default()).unwrap();
        let b = lasso_fit(&scaled, &y, 0.01, &CdParams::default()).unwrap();
        let pa = &theta * &a.xi;
        let pb = &scaled * &b.xi;
        prop_assert!((pa - pb).amax() < 1e-6);
    }

    #[test]
    fn stlsq_coefficients_respect_threshold(seed in 0u64..100, thr in 0.05f64..1.0) {
        let theta = design(200, 7, seed);
        let y = DMatrix::from_fn(200, 2, |i, j| theta[(i, 1 + j)] * 1.5 - 0.3 * theta[(i, 5)] + 0.01 * theta[(i, 6)]);
        if let Ok(fit) = stlsq_fit(&theta, &y, thr, 20) {
            prop_assert!(fit.xi.iter().all(|v| *v == 0.0 || v.abs() >= thr));
        }
    }
}
