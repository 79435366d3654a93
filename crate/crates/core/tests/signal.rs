use std::collections::BTreeSet;
use std::f64::consts::PI;

use fo_locate::dynamics::{simulate, FarmModel, ForcingSpec, NoiseSpec, SimSettings, Trajectory};
use fo_locate::signal::{
    amplitude_spectrum, dedup_frequencies, finite_difference, zscore_peaks, Peak, Spectrum, ZScoreParams,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const BAND: (f64, f64) = (0.388, 0.775);

/// Single-turbine trajectory with `f` in the Δδ column and zeros elsewhere.
fn traj_of(f: impl Fn(f64) -> f64, dt: f64, m: usize) -> Trajectory {
    Trajectory {
        dt,
        t0: 0.0,
        states: DMatrix::from_fn(m, 2, |k, c| if c == 0 { f(k as f64 * dt) } else { 0.0 }),
    }
}

fn interior_max_error(dt: f64) -> f64 {
    let w = 2.0 * PI * 0.71;
    let m = (10.0 / dt).round() as usize + 1;
    let ms = finite_difference(&traj_of(|t| (w * t).sin(), dt, m)).unwrap();
    (1..m - 1)
        .map(|k| (ms.xdot[(k, 0)] - w * (w * k as f64 * dt).cos()).abs())
        .fold(0.0, f64::max)
}

#[test]
fn finite_difference_is_second_order() {
    for dt in [0.04, 0.02, 0.01] {
        let ratio = interior_max_error(dt) / interior_max_error(dt / 2.0);
        assert!((3.5..=4.5).contains(&ratio), "dt = {dt}: ratio {ratio}");
    }
}

#[test]
fn finite_difference_end_stencils_are_second_order() {
    let w = 2.0 * PI * 0.71;
    let end_err = |dt: f64| {
        let ms = finite_difference(&traj_of(|t| (w * t).sin(), dt, 200)).unwrap();
        (ms.xdot[(0, 0)] - w).abs()
    };
    let ratio = end_err(0.02) / end_err(0.01);
    assert!((3.5..=4.5).contains(&ratio), "{ratio}");
}

#[test]
fn fft_tone_location_and_amplitude() {
    let (a, f, dt) = (0.37, 0.71, 0.01);
    let m = 8000;
    let spec = amplitude_spectrum(&traj_of(|t| a * (2.0 * PI * f * t).sin(), dt, m), 0).unwrap();
    let df = 1.0 / (m as f64 * dt);
    assert!((spec.resolution() - df).abs() < 1e-15);
    let (k, peak) = spec
        .amps
        .iter()
        .enumerate()
        .fold((0, 0.0), |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc });
    assert!((spec.freqs[k] - f).abs() <= df, "{}", spec.freqs[k]);
    assert!((peak - a).abs() < 0.05 * a, "{peak}");
}

#[test]
fn spectrum_shape_invariants() {
    let spec = amplitude_spectrum(&traj_of(|t| (3.0 * t).cos() + 0.2, 0.01, 1001), 0).unwrap();
    assert_eq!(spec.freqs.len(), spec.amps.len());
    assert_eq!(spec.freqs[0], 0.0);
    assert!(spec.freqs.windows(2).all(|w| w[1] > w[0]));
    assert!(spec.amps.iter().all(|a| *a >= 0.0));
    assert!((spec.freqs.last().unwrap() - 50.0).abs() < 0.06);
}

fn noisy_tone_spectrum(seed: u64) -> Spectrum {
    // Tone amplitude 1, floor about 40 dB down.
    let m = 10000;
    let dt = 0.01;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 0.01 * (m as f64).sqrt() / 2.0).unwrap();
    let noise: Vec<f64> = (0..m).map(|_| normal.sample(&mut rng)).collect();
    let traj = Trajectory {
        dt,
        t0: 0.0,
        states: DMatrix::from_fn(m, 2, |k, c| {
            if c == 0 {
                (2.0 * PI * 0.71 * k as f64 * dt).sin() + noise[k]
            } else {
                0.0
            }
        }),
    };
    amplitude_spectrum(&traj, 0).unwrap()
}

#[test]
fn zscore_finds_single_tone_over_floor() {
    for seed in 0..5 {
        let spec = noisy_tone_spectrum(seed);
        let peaks = zscore_peaks(&spec, &ZScoreParams::default(), BAND).unwrap();
        let freqs: Vec<f64> = peaks.iter().map(|p| p.freq_hz).collect();
        assert_eq!(freqs, vec![0.71], "seed {seed}");
    }
}

#[test]
fn case1_spectra_show_forcing_peak() {
    let farm = FarmModel::three_turbine_default();
    let f = [ForcingSpec::tone(0, 0.71, 0.5, 0.0)];
    let noise = NoiseSpec {
        load_sigma: 0.02,
        meas_sigma_omega: 1e-4,
        meas_sigma_delta: 1e-5,
        rng_seed: 1,
        ..NoiseSpec::none()
    };
    let traj = simulate(&farm, &f, &noise, &SimSettings::new(0.01, 120.0)).unwrap();
    let traj = fo_locate::dynamics::steady_state_window(&traj, 20.0).unwrap();
    let mut lists = Vec::new();
    for c in 3..6 {
        let spec = amplitude_spectrum(&traj, c).unwrap();
        let peaks = zscore_peaks(&spec, &ZScoreParams::default(), BAND).unwrap();
        assert!(peaks.iter().any(|p| p.freq_hz == 0.71), "channel {c}: {peaks:?}");
        lists.push((spec.channel_label.clone(), peaks));
    }
    let cands = dedup_frequencies(&lists, 0.015).unwrap();
    let i = cands.freqs.iter().position(|f| *f == 0.71).unwrap();
    let expected: BTreeSet<String> = ["omega_1", "omega_2", "omega_3"].iter().map(|s| s.to_string()).collect();
    assert_eq!(cands.provenance[i], expected);
}

#[test]
fn published_case1_candidates_survive_dedup() {
    let list = [0.39, 0.42, 0.45, 0.53, 0.66, 0.68, 0.71, 0.74, 0.76];
    let peaks = |fs: &[f64]| -> Vec<Peak> {
        fs.iter()
            .map(|&f| Peak {
                freq_hz: f,
                amplitude: 1.0,
                bin: 0,
            })
            .collect()
    };
    let lists = vec![
        ("omega_1".to_string(), peaks(&list)),
        ("omega_2".to_string(), peaks(&list[3..])),
        ("omega_3".to_string(), peaks(&[0.71, 0.66])),
    ];
    let c = dedup_frequencies(&lists, 0.015).unwrap();
    assert_eq!(c.freqs, list.to_vec());
}

fn arb_spectrum() -> impl Strategy<Value = Spectrum> {
    (prop::collection::vec(0.0f64..1.0, 200), prop::collection::vec((40usize..80, 2.0f64..20.0), 0..4)).prop_map(
        |(mut amps, spikes)| {
            for (bin, h) in spikes {
                amps[bin] += h;
            }
            Spectrum {
                freqs: (0..200).map(|k| k as f64 * 0.01).collect(),
                amps,
                channel_label: "omega_1".into(),
            }
        },
    )
}

fn arb_peak_lists() -> impl Strategy<Value = Vec<(String, Vec<Peak>)>> {
    prop::collection::vec(
        prop::collection::vec((39u32..78, 0.01f64..5.0), 0..8).prop_map(|v| {
            v.into_iter()
                .map(|(c, a)| Peak {
                    freq_hz: c as f64 / 100.0,
                    amplitude: a,
                    bin: 0,
                })
                .collect::<Vec<_>>()
        }),
        1..4,
    )
    .prop_map(|lists| {
        lists
            .into_iter()
            .enumerate()
            .map(|(i, p)| (format!("omega_{}", i + 1), p))
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn zscore_peaks_are_scale_invariant(spec in arb_spectrum(), c in 1e-3f64..1e3) {
        let base = zscore_peaks(&spec, &ZScoreParams::default(), BAND).unwrap();
        let scaled = Spectrum { amps: spec.amps.iter().map(|a| a * c).collect(), ..spec.clone() };
        let again = zscore_peaks(&scaled, &ZScoreParams::default(), BAND).unwrap();
        let fa: Vec<f64> = base.iter().map(|p| p.freq_hz).collect();
        let fb: Vec<f64> = again.iter().map(|p| p.freq_hz).collect();
        prop_assert_eq!(fa, fb);
    }

    #[test]
    fn zscore_peaks_stay_in_band(spec in arb_spectrum(), lo in 0.2f64..0.6, width in 0.1f64..0.9) {
        let band = (lo, (lo + width).min(1.99));
        let peaks = zscore_peaks(&spec, &ZScoreParams::default(), band).unwrap();
        prop_assert!(peaks.iter().all(|p| p.freq_hz >= band.0 && p.freq_hz <= band.1));
    }

    #[test]
    fn dedup_is_idempotent(lists in arb_peak_lists(), tol in 0.005f64..0.05) {
        let once = dedup_frequencies(&lists, tol).unwrap();
        let twice = dedup_frequencies(&once.as_peak_lists(), tol).unwrap();
        prop_assert_eq!(&once.freqs, &twice.freqs);
        prop_assert!(once.freqs.windows(2).all(|w| w[1] - w[0] > tol));
    }
}
