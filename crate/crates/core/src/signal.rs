//! Identification inputs: derivative estimates, amplitude spectra and
//! candidate forcing frequencies.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};

/// The regression inputs `X` and `Ẋ` on a uniform time base.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub x: DMatrix<f64>,
    pub xdot: DMatrix<f64>,
    pub dt: f64,
    pub t0: f64,
}

impl MeasurementSet {
    pub fn n_samples(&self) -> usize {
        self.x.nrows()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }
}

/// Second-order finite differences: central in the interior, three-point
/// one-sided at both ends.
pub fn finite_difference(traj: &Trajectory) -> Result<MeasurementSet> {
    let m = traj.n_samples();
    if m < 3 {
        return Err(Error::InsufficientData(format!(
            "finite differences need at least 3 samples, got {m}"
        )));
    }
    let x = &traj.states;
    let h2 = 2.0 * traj.dt;
    let mut xdot = DMatrix::zeros(m, x.ncols());
    for c in 0..x.ncols() {
        let col = x.column(c);
        xdot[(0, c)] = (-3.0 * col[0] + 4.0 * col[1] - col[2]) / h2;
        for k in 1..m - 1 {
            xdot[(k, c)] = (col[k + 1] - col[k - 1]) / h2;
        }
        xdot[(m - 1, c)] = (3.0 * col[m - 1] - 4.0 * col[m - 2] + col[m - 3]) / h2;
    }
    Ok(MeasurementSet {
        x: x.clone(),
        xdot,
        dt: traj.dt,
        t0: traj.t0,
    })
}

/// One-sided amplitude spectrum of a single channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub freqs: Vec<f64>,
    pub amps: Vec<f64>,
    pub channel_label: String,
}

impl Spectrum {
    pub fn resolution(&self) -> f64 {
        self.freqs.get(1).copied().unwrap_or(0.0)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("freq_hz,amplitude\n");
        for (f, a) in self.freqs.iter().zip(&self.amps) {
            s.push_str(&format!("{},{}\n", crate::io::fmt17(*f), crate::io::fmt17(*a)));
        }
        s
    }
}

fn hann(m: usize) -> Vec<f64> {
    let denom = (m - 1) as f64;
    (0..m)
        .map(|k| 0.5 * (1.0 - (2.0 * PI * k as f64 / denom).cos()))
        .collect()
}

/// Mean-removed, Hann-windowed signal and its full complex DFT.
fn windowed_dft(signal: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<Complex64>) {
    let m = signal.len();
    let mean = signal.iter().sum::<f64>() / m as f64;
    let window = hann(m);
    let windowed: Vec<f64> = signal
        .iter()
        .zip(&window)
        .map(|(x, w)| (x - mean) * w)
        .collect();
    let mut buf: Vec<Complex64> = windowed.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    (window, windowed, buf)
}

/// Hann-windowed one-sided amplitude spectrum, corrected for coherent gain so
/// that a sinusoid of amplitude `A` reads ≈ `A` at its bin.
pub fn amplitude_spectrum(traj: &Trajectory, channel: usize) -> Result<Spectrum> {
    let available = traj.states.ncols();
    if channel >= available {
        return Err(Error::InvalidChannel { channel, available });
    }
    let m = traj.n_samples();
    if m < 16 {
        return Err(Error::InsufficientData(format!(
            "spectrum needs at least 16 samples, got {m}"
        )));
    }
    let signal: Vec<f64> = traj.states.column(channel).iter().copied().collect();
    let (window, _, dft) = windowed_dft(&signal);
    let gain: f64 = window.iter().sum();
    let df = 1.0 / (m as f64 * traj.dt);
    let half = m / 2;
    let mut freqs = Vec::with_capacity(half + 1);
    let mut amps = Vec::with_capacity(half + 1);
    for (k, z) in dft.iter().take(half + 1).enumerate() {
        let one_sided = k == 0 || (m % 2 == 0 && k == half);
        let scale = if one_sided { 1.0 } else { 2.0 };
        freqs.push(k as f64 * df);
        amps.push(scale * z.norm() / gain);
    }
    Ok(Spectrum {
        freqs,
        amps,
        channel_label: traj.channel_names()[channel].clone(),
    })
}

/// Smoothed z-score detector settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ZScoreParams {
    /// Trailing window length in bins.
    pub lag: usize,
    /// Flag when the z-score exceeds this value.
    pub threshold: f64,
    /// Weight of a flagged sample in the trailing statistics.
    pub influence: f64,
}

impl Default for ZScoreParams {
    fn default() -> Self {
        Self {
            lag: 30,
            threshold: 3.5,
            influence: 0.1,
        }
    }
}

/// A detected spectral peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    /// Bin frequency rounded to 0.01 Hz.
    pub freq_hz: f64,
    pub amplitude: f64,
    pub bin: usize,
}

pub fn round_centi(f: f64) -> f64 {
    (f * 100.0).round() / 100.0
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn in_band(f: f64, band: (f64, f64)) -> bool {
    f >= band.0 && f <= band.1
}

/// Smoothed z-score peak detection over the bins of `spec` inside `band`.
///
/// The trailing window is seeded with the `lag` bins just below the band (or
/// the first `lag` bins of the spectrum when the band starts lower), so every
/// in-band bin is scored. Each contiguous run of positive flags collapses to
/// its highest-amplitude bin. A zero-variance window scores z = 0.
pub fn zscore_peaks(spec: &Spectrum, params: &ZScoreParams, band: (f64, f64)) -> Result<Vec<Peak>> {
    if params.lag < 3 {
        return Err(Error::Config(format!("z-score lag must be ≥ 3, got {}", params.lag)));
    }
    if !(params.threshold > 0.0) {
        return Err(Error::Config("z-score threshold must be > 0".into()));
    }
    if !(0.0..=1.0).contains(&params.influence) {
        return Err(Error::Config("z-score influence must lie in [0, 1]".into()));
    }
    let empty = Error::EmptyBand {
        lo: band.0,
        hi: band.1,
    };
    let nyquist = spec.freqs.last().copied().unwrap_or(0.0);
    if !(band.0 > 0.0 && band.0 < band.1 && band.1 <= nyquist) {
        return Err(empty);
    }
    let lo = spec.freqs.iter().position(|&f| f >= band.0).ok_or(empty)?;
    let hi = match spec.freqs.iter().rposition(|&f| f <= band.1) {
        Some(hi) if hi >= lo => hi,
        _ => {
            return Err(Error::EmptyBand {
                lo: band.0,
                hi: band.1,
            })
        }
    };
    let lag = params.lag;
    let seed_start = lo.saturating_sub(lag);
    let first_scored = (seed_start + lag).max(lo);
    if first_scored > hi {
        return Err(Error::EmptyBand {
            lo: band.0,
            hi: band.1,
        });
    }

    let y = &spec.amps;
    let mut filtered: Vec<f64> = y[seed_start..first_scored].to_vec();
    // Trailing statistics use the last `lag` filtered values.
    let (mut avg, mut std) = mean_std(&filtered[filtered.len() - lag.min(filtered.len())..]);
    let mut flags = vec![false; hi + 1];
    for i in first_scored..=hi {
        let scale = std.max(0.0);
        let significant = scale > 1e-12 * avg.abs().max(f64::MIN_POSITIVE);
        let z = if significant { (y[i] - avg) / scale } else { 0.0 };
        let prev = *filtered.last().expect("seed window is non-empty");
        if z.abs() > params.threshold {
            flags[i] = z > 0.0;
            filtered.push(params.influence * y[i] + (1.0 - params.influence) * prev);
        } else {
            filtered.push(y[i]);
        }
        let tail = &filtered[filtered.len() - lag..];
        (avg, std) = mean_std(tail);
    }

    let mut peaks = Vec::new();
    let mut i = lo;
    while i <= hi {
        if !flags[i] {
            i += 1;
            continue;
        }
        let mut best = i;
        while i <= hi && flags[i] {
            if y[i] > y[best] {
                best = i;
            }
            i += 1;
        }
        let freq_hz = round_centi(spec.freqs[best]);
        if in_band(freq_hz, band) {
            peaks.push(Peak {
                freq_hz,
                amplitude: y[best],
                bin: best,
            });
        }
    }
    Ok(peaks)
}

/// Deduplicated candidate frequencies with the channels that reported them.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CandidateFrequencies {
    pub freqs: Vec<f64>,
    pub provenance: Vec<BTreeSet<String>>,
    /// Largest contributing peak amplitude per candidate.
    pub amplitudes: Vec<f64>,
}

impl CandidateFrequencies {
    pub fn from_freqs(freqs: &[f64]) -> Self {
        let mut freqs: Vec<f64> = freqs.to_vec();
        freqs.sort_by(f64::total_cmp);
        freqs.dedup();
        Self {
            provenance: vec![BTreeSet::new(); freqs.len()],
            amplitudes: vec![0.0; freqs.len()],
            freqs,
        }
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    /// Re-expresses the candidates as per-channel peak lists.
    pub fn as_peak_lists(&self) -> Vec<(String, Vec<Peak>)> {
        let channels: BTreeSet<&String> = self.provenance.iter().flatten().collect();
        channels
            .into_iter()
            .map(|ch| {
                let peaks = (0..self.len())
                    .filter(|&i| self.provenance[i].contains(ch))
                    .map(|i| Peak {
                        freq_hz: self.freqs[i],
                        amplitude: self.amplitudes[i],
                        bin: 0,
                    })
                    .collect();
                (ch.clone(), peaks)
            })
            .collect()
    }
}

const FREQ_EPS: f64 = 1e-9;

struct Cluster {
    members: Vec<(f64, f64, String)>,
}

impl Cluster {
    fn representative(&self) -> f64 {
        let wsum: f64 = self.members.iter().map(|m| m.1).sum();
        let mean = if wsum > 0.0 {
            self.members.iter().map(|m| m.0 * m.1).sum::<f64>() / wsum
        } else {
            self.members.iter().map(|m| m.0).sum::<f64>() / self.members.len() as f64
        };
        round_centi(mean)
    }
}

/// Greedy ascending clustering of all peaks with cluster width `tol`.
///
/// Each cluster is represented by its amplitude-weighted mean frequency rounded
/// to 0.01 Hz; clusters whose representatives end up within `tol` of each
/// other are merged so that the output entries are more than `tol` apart.
pub fn dedup_frequencies(peak_lists: &[(String, Vec<Peak>)], tol: f64) -> Result<CandidateFrequencies> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("dedup tolerance must be > 0, got {tol}")));
    }
    let mut all: Vec<(f64, f64, String)> = peak_lists
        .iter()
        .flat_map(|(ch, peaks)| peaks.iter().map(move |p| (p.freq_hz, p.amplitude, ch.clone())))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.2.cmp(&b.2)));

    let mut clusters: Vec<Cluster> = Vec::new();
    for peak in all {
        match clusters.last_mut() {
            Some(c) if peak.0 - c.members[0].0 <= tol + FREQ_EPS => c.members.push(peak),
            _ => clusters.push(Cluster {
                members: vec![peak],
            }),
        }
    }

    loop {
        let reps: Vec<f64> = clusters.iter().map(Cluster::representative).collect();
        let Some(i) = (1..reps.len()).find(|&i| reps[i] - reps[i - 1] <= tol + FREQ_EPS) else {
            break;
        };
        let next = clusters.remove(i);
        clusters[i - 1].members.extend(next.members);
    }

    let mut out = CandidateFrequencies::default();
    for c in &clusters {
        out.freqs.push(c.representative());
        out.provenance
            .push(c.members.iter().map(|m| m.2.clone()).collect());
        out.amplitudes
            .push(c.members.iter().map(|m| m.1).fold(0.0, f64::max));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj_from(f: impl Fn(f64) -> f64, dt: f64, m: usize) -> Trajectory {
        let col: Vec<f64> = (0..m).map(|k| f(k as f64 * dt)).collect();
        let mut states = DMatrix::zeros(m, 2);
        states.column_mut(0).copy_from_slice(&col);
        states.column_mut(1).copy_from_slice(&col);
        Trajectory { dt, t0: 0.0, states }
    }

    #[test]
    fn constant_has_zero_derivative() {
        let ms = finite_difference(&traj_from(|_| 3.5, 0.1, 20)).unwrap();
        assert!(ms.xdot.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn quadratic_is_exact() {
        let ms = finite_difference(&traj_from(|t| t * t, 0.1, 50)).unwrap();
        for k in 0..50 {
            let t = k as f64 * 0.1;
            // One-sided three-point stencils are exact for quadratics as well.
            assert!((ms.xdot[(k, 0)] - 2.0 * t).abs() < 1e-10, "k={k}");
        }
    }

    #[test]
    fn sinusoid_interior_error_bound() {
        let w = 2.0 * PI * 0.71;
        let ms = finite_difference(&traj_from(|t| (w * t).sin(), 0.01, 2000)).unwrap();
        let max_err = (1..1999)
            .map(|k| (ms.xdot[(k, 0)] - w * (w * k as f64 * 0.01).cos()).abs())
            .fold(0.0, f64::max);
        // Leading truncation term of the central difference: ω³h²/6.
        let bound = w.powi(3) * 1e-4 / 6.0;
        assert!(max_err < 1.01 * bound && max_err > 0.9 * bound, "{max_err} vs {bound}");
    }

    #[test]
    fn fewer_than_three_samples() {
        assert!(matches!(
            finite_difference(&traj_from(|t| t, 0.1, 2)),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn parseval_holds_before_normalization() {
        let sig: Vec<f64> = (0..1000)
            .map(|k| (0.3 * k as f64).sin() + 0.1 * (k as f64).cos() + 0.01 * k as f64)
            .collect();
        let (_, windowed, dft) = windowed_dft(&sig);
        let time_energy: f64 = windowed.iter().map(|v| v * v).sum();
        let freq_energy: f64 = dft.iter().map(|z| z.norm_sqr()).sum::<f64>() / sig.len() as f64;
        assert!(((time_energy - freq_energy) / time_energy).abs() < 1e-9);
    }

    #[test]
    fn zero_signal_spectrum() {
        let s = amplitude_spectrum(&traj_from(|_| 0.0, 0.01, 64), 0).unwrap();
        assert!(s.amps.iter().all(|a| *a == 0.0));
        assert_eq!(s.freqs[0], 0.0);
    }

    #[test]
    fn invalid_channel() {
        assert!(matches!(
            amplitude_spectrum(&traj_from(|_| 0.0, 0.01, 64), 2),
            Err(Error::InvalidChannel { .. })
        ));
    }

    #[test]
    fn flat_spectrum_has_no_peaks() {
        let spec = Spectrum {
            freqs: (0..200).map(|k| k as f64 * 0.01).collect(),
            amps: vec![0.1; 200],
            channel_label: "flat".into(),
        };
        assert!(zscore_peaks(&spec, &ZScoreParams::default(), (0.388, 0.775))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn band_outside_spectrum_errors() {
        let spec = Spectrum {
            freqs: (0..50).map(|k| k as f64 * 0.01).collect(),
            amps: vec![1.0; 50],
            channel_label: "x".into(),
        };
        assert!(matches!(
            zscore_peaks(&spec, &ZScoreParams::default(), (0.6, 0.7)),
            Err(Error::EmptyBand { .. })
        ));
    }

    #[test]
    fn dedup_examples() {
        let p = |f: f64| Peak {
            freq_hz: f,
            amplitude: 1.0,
            bin: 0,
        };
        let one = dedup_frequencies(&[("a".into(), vec![p(0.71)])], 0.015).unwrap();
        assert_eq!(one.freqs, vec![0.71]);

        let c = dedup_frequencies(&[("a".into(), vec![p(0.71), p(0.712), p(0.53)])], 0.02).unwrap();
        assert_eq!(c.freqs, vec![0.53, 0.71]);

        let empty = dedup_frequencies(&[], 0.02).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn dedup_keeps_neighbours_two_bins_apart() {
        let p = |f: f64| Peak {
            freq_hz: f,
            amplitude: 1.0,
            bin: 0,
        };
        let c = dedup_frequencies(&[("a".into(), vec![p(0.66), p(0.68), p(0.71)])], 0.015).unwrap();
        assert_eq!(c.freqs, vec![0.66, 0.68, 0.71]);
    }
}
