#![allow(dead_code)]

use fo_locate::dynamics::{simulate, FarmModel, ForcingSpec, NoiseSpec, SimSettings, Trajectory};
use fo_locate::library::{build_library, column_index, FeatureLibrary, Term};
use fo_locate::signal::{finite_difference, CandidateFrequencies, MeasurementSet};
use nalgebra::{DMatrix, DVector};

pub const CASE3_FREQS: [f64; 3] = [0.53, 0.61, 0.71];

/// Initial state that excites every mode so the states are not collinear with
/// the forcing sinusoids.
pub fn kick() -> Vec<f64> {
    vec![0.02, -0.015, 0.01, 0.05, 0.0, -0.04]
}

/// Noise-free transient of the default farm with Case-3 forcing.
pub fn case3_transient(duration: f64) -> Trajectory {
    let farm = FarmModel::three_turbine_default();
    let forcings = vec![
        ForcingSpec::tone(0, 0.71, 0.5, 0.0),
        ForcingSpec::tone(1, 0.61, 0.5, 0.7),
        ForcingSpec::tone(2, 0.53, 0.5, 1.9),
    ];
    simulate(
        &farm,
        &forcings,
        &NoiseSpec::none(),
        &SimSettings::new(0.01, duration).with_initial_state(kick()),
    )
    .unwrap()
}

/// The true `Ξ` of the default farm under Case-3 forcing, in the degree-1
/// library over `freqs`.
pub fn true_xi(lib: &FeatureLibrary) -> DMatrix<f64> {
    let farm = FarmModel::three_turbine_default();
    let r = 3;
    let mut xi = DMatrix::zeros(lib.n_features(), 2 * r);
    let col = |t: Term| column_index(lib, &t).unwrap();
    let state = |i: usize| col(Term::Monomial { factors: vec![(i, 1)] });
    let tones = [(0usize, 0.71, 0.0f64), (1, 0.61, 0.7), (2, 0.53, 1.9)];
    for i in 0..r {
        xi[(state(r + i), i)] = 1.0;
        let tp = &farm.turbines[i];
        let m = tp.inertia;
        let csum: f64 = (0..r).map(|j| farm.coupling[i][j]).sum();
        xi[(state(i), r + i)] = -(tp.sync_stiffness + csum) / m;
        for j in 0..r {
            if j != i {
                xi[(state(j), r + i)] = farm.coupling[i][j] / m;
            }
        }
        xi[(state(r + i), r + i)] = -tp.damping / m;
        let (_, f, phase) = tones[i];
        xi[(col(Term::ForcedSin { freq_hz: f }), r + i)] = 0.5 * phase.cos() / m;
        xi[(col(Term::ForcedCos { freq_hz: f }), r + i)] = 0.5 * phase.sin() / m;
    }
    xi
}

pub fn case3_library(duration: f64) -> (FeatureLibrary, MeasurementSet) {
    let ms = finite_difference(&case3_transient(duration)).unwrap();
    let lib = build_library(&ms, &CandidateFrequencies::from_freqs(&CASE3_FREQS), 1).unwrap();
    (lib, ms)
}

/// Least squares on the given columns via Cholesky of the normal equations;
/// independent of the crate's QR solver.
pub fn restricted_oracle(theta: &DMatrix<f64>, y: &DVector<f64>, support: &[usize]) -> DVector<f64> {
    let a = theta.select_columns(support);
    let ata = a.transpose() * &a;
    let aty = a.transpose() * y;
    let sol = ata.cholesky().expect("restricted design has full rank").solve(&aty);
    let mut full = DVector::zeros(theta.ncols());
    for (k, &j) in support.iter().enumerate() {
        full[j] = sol[k];
    }
    full
}

pub fn support_of(v: &[f64]) -> Vec<usize> {
    v.iter().enumerate().filter(|(_, x)| **x != 0.0).map(|(i, _)| i).collect()
}

/// Degree-1 library and derivatives of a three-turbine trajectory over `freqs`.
pub fn library_of(traj: &Trajectory, freqs: &[f64]) -> (FeatureLibrary, MeasurementSet) {
    let ms = finite_difference(traj).unwrap();
    let lib = build_library(&ms, &CandidateFrequencies::from_freqs(freqs), 1).unwrap();
    (lib, ms)
}

/// Default farm, 0.71 Hz tone of amplitude 0.5 on WT1, started from [`kick`].
pub fn case1_run(phase: f64, duration: f64, noise: &NoiseSpec) -> Trajectory {
    simulate(
        &FarmModel::three_turbine_default(),
        &[ForcingSpec::tone(0, 0.71, 0.5, phase)],
        noise,
        &SimSettings::new(0.01, duration).with_initial_state(kick()),
    )
    .unwrap()
}

pub fn stlsq(threshold: f64) -> fo_locate::ensemble::SolverConfig {
    fo_locate::ensemble::SolverConfig::Stlsq {
        threshold,
        max_sweeps: 10,
    }
}
