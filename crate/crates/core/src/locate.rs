//! Forcing amplitudes from the sinusoid block of `Ξ` and outlier-based source
//! flagging.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ensemble::EnsembleModel;
use crate::error::{Error, Result};
use crate::library::Term;

/// Normal-consistency constant for the median absolute deviation.
pub const MAD_SCALE: f64 = 1.4826;

/// `A_ij = √(a_ij² + b_ij²)` per candidate frequency `i` and turbine `j`, in
/// acceleration units (forcing torque over inertia).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcingAmplitudeTable {
    pub freqs: Vec<f64>,
    pub turbine_labels: Vec<String>,
    /// Row-major `n × r`.
    pub entries: Vec<Vec<f64>>,
    /// Cosine coefficients `a_ij`.
    pub cos_coef: Vec<Vec<f64>>,
    /// Sine coefficients `b_ij`.
    pub sin_coef: Vec<Vec<f64>>,
}

impl ForcingAmplitudeTable {
    pub fn amplitude(&self, freq_hz: f64, turbine: usize) -> Option<f64> {
        let i = self.freqs.iter().position(|f| (f - freq_hz).abs() < 1e-9)?;
        self.entries[i].get(turbine).copied()
    }

    pub fn max(&self) -> f64 {
        self.entries.iter().flatten().fold(0.0, |a, b| a.max(*b))
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        let n = self.freqs.len();
        let r = self.turbine_labels.len();
        DMatrix::from_fn(n, r, |i, j| self.entries[i][j])
    }

    /// Rows = frequencies, columns = turbines.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("freq_hz");
        for l in &self.turbine_labels {
            s.push(',');
            s.push_str(l);
        }
        s.push('\n');
        for (f, row) in self.freqs.iter().zip(&self.entries) {
            s.push_str(&format!("{f:.2}"));
            for v in row {
                s.push(',');
                s.push_str(&crate::io::fmt17(*v));
            }
            s.push('\n');
        }
        s
    }
}

pub fn turbine_labels(r: usize) -> Vec<String> {
    (1..=r).map(|j| format!("WT{j}")).collect()
}

/// Reads the ForcedCos/ForcedSin coefficients of every `Δω̇_j` target.
pub fn extract_amplitudes(model: &EnsembleModel) -> Result<ForcingAmplitudeTable> {
    let q = model.aggregated_xi.ncols();
    if q == 0 || q % 2 != 0 {
        return Err(Error::Consistency(format!(
            "expected 2r target columns, found {q}"
        )));
    }
    let r = q / 2;
    let mut freqs: Vec<f64> = model
        .terms
        .iter()
        .filter_map(|t| match t {
            Term::ForcedSin { freq_hz } | Term::ForcedCos { freq_hz } => Some(*freq_hz),
            _ => None,
        })
        .collect();
    freqs.sort_by(f64::total_cmp);
    freqs.dedup();

    let find = |want: &Term| model.terms.iter().position(|t| t == want);
    let mut entries = Vec::with_capacity(freqs.len());
    let mut cos_coef = Vec::with_capacity(freqs.len());
    let mut sin_coef = Vec::with_capacity(freqs.len());
    for &f in &freqs {
        let (Some(ci), Some(si)) = (
            find(&Term::ForcedCos { freq_hz: f }),
            find(&Term::ForcedSin { freq_hz: f }),
        ) else {
            return Err(Error::Consistency(format!(
                "candidate {f} Hz lacks a sin/cos pair in the library"
            )));
        };
        let a: Vec<f64> = (0..r).map(|j| model.aggregated_xi[(ci, r + j)]).collect();
        let b: Vec<f64> = (0..r).map(|j| model.aggregated_xi[(si, r + j)]).collect();
        entries.push(a.iter().zip(&b).map(|(a, b)| a.hypot(*b)).collect());
        cos_coef.push(a);
        sin_coef.push(b);
    }
    Ok(ForcingAmplitudeTable {
        freqs,
        turbine_labels: turbine_labels(r),
        entries,
        cos_coef,
        sin_coef,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub turbine_label: String,
    pub turbine_index: usize,
    pub frequency_hz: f64,
    /// Acceleration units.
    pub amplitude: f64,
    /// `None` when the spread of the table is zero (the entry is unbounded above the bulk).
    pub robust_z: Option<f64>,
    /// `amplitude × M_j` when the inertia is known; model-dependent.
    pub torque_equivalent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub detected: Vec<Detection>,
    pub table: ForcingAmplitudeTable,
    pub method: String,
    pub z_cutoff: f64,
    pub floor: f64,
    pub median: f64,
    pub mad: f64,
}

impl LocalizationReport {
    /// `(turbine index, frequency)` pairs, in report order.
    pub fn flagged(&self) -> Vec<(usize, f64)> {
        self.detected
            .iter()
            .map(|d| (d.turbine_index, d.frequency_hz))
            .collect()
    }

    /// Fills `torque_equivalent` from per-turbine inertias.
    pub fn with_inertias(mut self, inertias: &[f64]) -> Self {
        for d in &mut self.detected {
            d.torque_equivalent = inertias.get(d.turbine_index).map(|m| m * d.amplitude);
        }
        self
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn median_of(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Flags entries whose robust z-score `(A − median)/(1.4826·MAD)` reaches
/// `z_cutoff` and whose amplitude is at least `floor`.
///
/// When the MAD is zero every entry above the median is treated as an
/// unbounded outlier, so only the floor decides.
pub fn flag_sources(table: &ForcingAmplitudeTable, z_cutoff: f64, floor: f64) -> Result<LocalizationReport> {
    if !(z_cutoff > 0.0) {
        return Err(Error::Config("z_cutoff must be > 0".into()));
    }
    if !(floor >= 0.0) {
        return Err(Error::Config("floor must be ≥ 0".into()));
    }
    let all: Vec<f64> = table.entries.iter().flatten().copied().collect();
    if all.is_empty() {
        return Err(Error::EmptyTable);
    }
    let med = median_of(&all);
    let deviations: Vec<f64> = all.iter().map(|a| (a - med).abs()).collect();
    let mad = median_of(&deviations);
    let spread = MAD_SCALE * mad;

    let mut detected = Vec::new();
    for (i, row) in table.entries.iter().enumerate() {
        for (j, &a) in row.iter().enumerate() {
            let (z, passes) = if spread > 0.0 {
                let z = (a - med) / spread;
                (Some(z), z >= z_cutoff)
            } else {
                (None, a > med)
            };
            if passes && a >= floor && a > 0.0 {
                detected.push(Detection {
                    turbine_label: table.turbine_labels[j].clone(),
                    turbine_index: j,
                    frequency_hz: table.freqs[i],
                    amplitude: a,
                    robust_z: z,
                    torque_equivalent: None,
                });
            }
        }
    }
    detected.sort_by(|a, b| {
        b.amplitude
            .total_cmp(&a.amplitude)
            .then_with(|| a.frequency_hz.total_cmp(&b.frequency_hz))
            .then_with(|| a.turbine_index.cmp(&b.turbine_index))
    });

    Ok(LocalizationReport {
        detected,
        table: table.clone(),
        method: format!(
            "robust z-score over all (frequency, turbine) amplitudes: median/({MAD_SCALE}·MAD), cutoff {z_cutoff}, floor {floor:e}"
        ),
        z_cutoff,
        floor,
        median: med,
        mad,
    })
}
