//! Small-signal swing dynamics of a wind farm with forced and stochastic torques.
//!
//! Each turbine `i` evolves in deviation variables
//!
//! ```text
//! dΔδ_i/dt = Δω_i
//! M_i dΔω_i/dt = ΔT_m,i − K_i Δδ_i − D_i Δω_i − Σ_j C_ij (Δδ_i − Δδ_j) + T_f,i(t) − T_L,i(t)
//! ```
//!
//! where `K_i Δδ_i` is the linearized electromagnetic (synchronizing) torque,
//! `T_f,i` is a Fourier-series forcing torque and `T_L,i` a stochastic load
//! torque. The deterministic part is stepped with classical RK4; the load torque
//! is drawn once per step and held across the RK4 stages (Euler–Maruyama).

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical constants of one turbine, in small-signal form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct TurbineParams {
    /// Lumped rotor inertia `M` (torque·s²/rad).
    pub inertia: f64,
    /// Damping `D` (torque·s/rad).
    pub damping: f64,
    /// Synchronizing stiffness `K` (torque/rad).
    pub sync_stiffness: f64,
    /// Constant mechanical torque deviation `ΔT_m`.
    #[serde(default)]
    pub mech_torque_offset: f64,
}

impl TurbineParams {
    /// Builds a turbine from its uncoupled natural frequency and damping ratio.
    pub fn from_mode(inertia: f64, natural_freq_hz: f64, damping_ratio: f64) -> Self {
        let wn = 2.0 * PI * natural_freq_hz;
        Self {
            inertia,
            damping: 2.0 * damping_ratio * inertia * wn,
            sync_stiffness: inertia * wn * wn,
            mech_torque_offset: 0.0,
        }
    }

    /// Uncoupled undamped natural frequency `√(K/M) / 2π`.
    pub fn natural_frequency_hz(&self) -> f64 {
        (self.sync_stiffness / self.inertia).sqrt() / (2.0 * PI)
    }

    fn validate(&self, idx: usize) -> Result<()> {
        let ok = self.inertia.is_finite()
            && self.inertia > 0.0
            && self.damping.is_finite()
            && self.damping >= 0.0
            && self.sync_stiffness.is_finite()
            && self.sync_stiffness >= 0.0
            && self.mech_torque_offset.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "turbine {idx}: require M > 0, D ≥ 0, K ≥ 0 and finite values, got {self:?}"
            )))
        }
    }
}

/// The farm: turbines plus the symmetric inter-turbine coupling matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct FarmModel {
    pub turbines: Vec<TurbineParams>,
    /// Row-major `r × r` coupling stiffness (torque/rad), zero diagonal.
    pub coupling: Vec<Vec<f64>>,
    /// Synchronous speed `ω_s` (rad/s); reporting only.
    #[serde(default = "default_sync_speed")]
    pub sync_speed: f64,
}

fn default_sync_speed() -> f64 {
    2.0 * PI * 50.0
}

impl FarmModel {
    /// Farm with the default weak coupling `C_ij = 0.1·min(K_i, K_j)`.
    pub fn with_default_coupling(turbines: Vec<TurbineParams>) -> Self {
        Self::with_coupling_ratio(turbines, 0.1)
    }

    pub fn with_coupling_ratio(turbines: Vec<TurbineParams>, ratio: f64) -> Self {
        let r = turbines.len();
        let mut coupling = vec![vec![0.0; r]; r];
        for i in 0..r {
            for j in 0..r {
                if i != j {
                    coupling[i][j] = ratio
                        * turbines[i]
                            .sync_stiffness
                            .min(turbines[j].sync_stiffness);
                }
            }
        }
        Self {
            turbines,
            coupling,
            sync_speed: default_sync_speed(),
        }
    }

    /// Three turbines with natural frequencies 1.1, 1.2 and 1.3 Hz.
    pub fn three_turbine_default() -> Self {
        Self::with_default_coupling(vec![
            TurbineParams::from_mode(1.0, 1.1, 0.05),
            TurbineParams::from_mode(1.2, 1.2, 0.05),
            TurbineParams::from_mode(0.9, 1.3, 0.05),
        ])
    }

    pub fn n_turbines(&self) -> usize {
        self.turbines.len()
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.turbines.len();
        if r == 0 {
            return Err(Error::Config("farm must contain at least one turbine".into()));
        }
        for (i, t) in self.turbines.iter().enumerate() {
            t.validate(i)?;
        }
        if self.coupling.len() != r || self.coupling.iter().any(|row| row.len() != r) {
            return Err(Error::Config(format!("coupling must be {r}×{r}")));
        }
        for i in 0..r {
            if self.coupling[i][i] != 0.0 {
                return Err(Error::Config(format!("coupling[{i}][{i}] must be zero")));
            }
            for j in 0..r {
                let c = self.coupling[i][j];
                if !c.is_finite() || c < 0.0 {
                    return Err(Error::Config(format!(
                        "coupling[{i}][{j}] = {c} must be finite and non-negative"
                    )));
                }
                if c != self.coupling[j][i] {
                    return Err(Error::Config(format!(
                        "coupling not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One harmonic of the forcing torque: `a cos(2πft) + b sin(2πft)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct FourierComponent {
    pub frequency_hz: f64,
    pub cos_amp: f64,
    pub sin_amp: f64,
}

/// Fourier-series forcing torque applied to one turbine:
/// `T_f(t) = a_0/2 + Σ_n [a_n cos(2πf_n t) + b_n sin(2πf_n t)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ForcingSpec {
    /// 0-based turbine index.
    pub turbine_index: usize,
    pub components: Vec<FourierComponent>,
    #[serde(default)]
    pub dc: f64,
}

impl ForcingSpec {
    /// A single tone of the given amplitude and phase: `amp·sin(2πft + phase)`.
    pub fn tone(turbine_index: usize, frequency_hz: f64, amplitude: f64, phase: f64) -> Self {
        Self {
            turbine_index,
            components: vec![FourierComponent {
                frequency_hz,
                cos_amp: amplitude * phase.sin(),
                sin_amp: amplitude * phase.cos(),
            }],
            dc: 0.0,
        }
    }

    pub fn torque_at(&self, t: f64) -> f64 {
        self.components.iter().fold(0.5 * self.dc, |acc, c| {
            let arg = 2.0 * PI * c.frequency_hz * t;
            acc + c.cos_amp * arg.cos() + c.sin_amp * arg.sin()
        })
    }

    /// Same forcing with every amplitude multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            turbine_index: self.turbine_index,
            components: self
                .components
                .iter()
                .map(|c| FourierComponent {
                    frequency_hz: c.frequency_hz,
                    cos_amp: c.cos_amp * factor,
                    sin_amp: c.sin_amp * factor,
                })
                .collect(),
            dc: self.dc * factor,
        }
    }

    fn validate(&self, r: usize) -> Result<()> {
        if self.turbine_index >= r {
            return Err(Error::Config(format!(
                "forcing references turbine {} but the farm has {r}",
                self.turbine_index
            )));
        }
        if !self.dc.is_finite() {
            return Err(Error::Config("forcing dc term must be finite".into()));
        }
        for c in &self.components {
            if !(c.frequency_hz.is_finite() && c.frequency_hz > 0.0) {
                return Err(Error::Config(format!(
                    "forcing frequency must be positive, got {}",
                    c.frequency_hz
                )));
            }
            if !(c.cos_amp.is_finite() && c.sin_amp.is_finite()) {
                return Err(Error::Config("forcing amplitudes must be finite".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LoadNoiseModel {
    /// White torque with intensity `load_sigma` (torque·√s): held value `σ ξ / √dt`.
    White,
    /// Ornstein–Uhlenbeck torque with stationary std `load_sigma` and rate `theta` (1/s).
    OrnsteinUhlenbeck { theta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Load-torque noise level (see [`LoadNoiseModel`] for units).
    pub load_sigma: f64,
    pub load_model: LoadNoiseModel,
    /// Additive measurement noise std on `Δδ` (rad).
    pub meas_sigma_delta: f64,
    /// Additive measurement noise std on `Δω` (rad/s).
    pub meas_sigma_omega: f64,
    pub rng_seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self::none()
    }
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            load_sigma: 0.0,
            load_model: LoadNoiseModel::White,
            meas_sigma_delta: 0.0,
            meas_sigma_omega: 0.0,
            rng_seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        let sigmas = [self.load_sigma, self.meas_sigma_delta, self.meas_sigma_omega];
        if sigmas.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::Config("noise sigmas must be finite and ≥ 0".into()));
        }
        if let LoadNoiseModel::OrnsteinUhlenbeck { theta } = self.load_model {
            if !(theta.is_finite() && theta > 0.0) {
                return Err(Error::Config("Ornstein–Uhlenbeck theta must be > 0".into()));
            }
        }
        Ok(())
    }
}

/// Integration settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSettings {
    pub dt: f64,
    pub duration: f64,
    /// Initial `[Δδ_1..Δδ_r, Δω_1..Δω_r]`; zero when absent.
    pub initial_state: Option<Vec<f64>>,
}

impl SimSettings {
    pub fn new(dt: f64, duration: f64) -> Self {
        Self {
            dt,
            duration,
            initial_state: None,
        }
    }

    pub fn with_initial_state(mut self, x0: Vec<f64>) -> Self {
        self.initial_state = Some(x0);
        self
    }
}

/// Uniformly sampled states, columns `[Δδ_1..Δδ_r, Δω_1..Δω_r]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub t0: f64,
    pub states: DMatrix<f64>,
}

impl Trajectory {
    pub fn n_samples(&self) -> usize {
        self.states.nrows()
    }

    pub fn n_turbines(&self) -> usize {
        self.states.ncols() / 2
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn end_time(&self) -> f64 {
        self.time(self.n_samples().saturating_sub(1))
    }

    /// Column names in state order: `delta_1..delta_r, omega_1..omega_r`.
    pub fn channel_names(&self) -> Vec<String> {
        state_names(self.n_turbines())
    }
}

pub fn state_names(r: usize) -> Vec<String> {
    (1..=r)
        .map(|i| format!("delta_{i}"))
        .chain((1..=r).map(|i| format!("omega_{i}")))
        .collect()
}

struct Rhs<'a> {
    farm: &'a FarmModel,
    forcings: &'a [ForcingSpec],
}

impl Rhs<'_> {
    /// Writes `dx/dt` for state `x` at time `t` with held load torques `load`.
    fn eval(&self, t: f64, x: &[f64], load: &[f64], out: &mut [f64]) {
        let r = self.farm.turbines.len();
        let (delta, omega) = x.split_at(r);
        let mut torque: Vec<f64> = self
            .farm
            .turbines
            .iter()
            .enumerate()
            .map(|(i, tp)| {
                let coupling: f64 = self.farm.coupling[i]
                    .iter()
                    .zip(delta)
                    .map(|(c, dj)| c * (delta[i] - dj))
                    .sum();
                tp.mech_torque_offset
                    - tp.sync_stiffness * delta[i]
                    - tp.damping * omega[i]
                    - coupling
                    - load[i]
            })
            .collect();
        for f in self.forcings {
            torque[f.turbine_index] += f.torque_at(t);
        }
        out[..r].copy_from_slice(omega);
        for i in 0..r {
            out[r + i] = torque[i] / self.farm.turbines[i].inertia;
        }
    }
}

/// Integrates the farm from `t = 0` to `duration` with fixed step `dt`.
///
/// Produces `round(duration/dt) + 1` samples. Identical inputs give bitwise
/// identical output; the RNG is a ChaCha8 stream seeded from `noise.rng_seed`
/// (stream 0 for load torque, stream 1 for measurement noise).
pub fn simulate(
    farm: &FarmModel,
    forcings: &[ForcingSpec],
    noise: &NoiseSpec,
    settings: &SimSettings,
) -> Result<Trajectory> {
    farm.validate()?;
    noise.validate()?;
    let r = farm.n_turbines();
    for f in forcings {
        f.validate(r)?;
    }
    let dt = settings.dt;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Config(format!("dt must be positive, got {dt}")));
    }
    if !(settings.duration.is_finite() && settings.duration >= 10.0 * dt * (1.0 - 1e-12)) {
        return Err(Error::Config(format!(
            "duration {} must be at least 10·dt = {}",
            settings.duration,
            10.0 * dt
        )));
    }
    let n_steps = (settings.duration / dt).round() as usize;
    let n = 2 * r;

    let mut x = match &settings.initial_state {
        Some(x0) if x0.len() == n => x0.clone(),
        Some(x0) => {
            return Err(Error::Config(format!(
                "initial state has {} entries, expected {n}",
                x0.len()
            )))
        }
        None => vec![0.0; n],
    };
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("initial state must be finite".into()));
    }

    let rhs = Rhs { farm, forcings };
    let mut load_rng = ChaCha8Rng::seed_from_u64(noise.rng_seed);
    load_rng.set_stream(0);
    let mut load = vec![0.0; r];
    if let LoadNoiseModel::OrnsteinUhlenbeck { .. } = noise.load_model {
        for l in load.iter_mut() {
            let xi: f64 = StandardNormal.sample(&mut load_rng);
            *l = noise.load_sigma * xi;
        }
    }

    let mut states = DMatrix::zeros(n_steps + 1, n);
    states.row_mut(0).copy_from_slice(&x);

    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];

    for step in 0..n_steps {
        let t = step as f64 * dt;
        if noise.load_sigma > 0.0 {
            match noise.load_model {
                LoadNoiseModel::White => {
                    let scale = noise.load_sigma / dt.sqrt();
                    for l in load.iter_mut() {
                        let xi: f64 = StandardNormal.sample(&mut load_rng);
                        *l = scale * xi;
                    }
                }
                LoadNoiseModel::OrnsteinUhlenbeck { theta } => {
                    // Euler–Maruyama for dT = −θT dt + σ√(2θ) dW.
                    let diffusion = noise.load_sigma * (2.0 * theta * dt).sqrt();
                    if step > 0 {
                        for l in load.iter_mut() {
                            let xi: f64 = StandardNormal.sample(&mut load_rng);
                            *l += -theta * *l * dt + diffusion * xi;
                        }
                    }
                }
            }
        }

        rhs.eval(t, &x, &load, &mut k1);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * dt * k1[i];
        }
        rhs.eval(t + 0.5 * dt, &tmp, &load, &mut k2);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * dt * k2[i];
        }
        rhs.eval(t + 0.5 * dt, &tmp, &load, &mut k3);
        for i in 0..n {
            tmp[i] = x[i] + dt * k3[i];
        }
        rhs.eval(t + dt, &tmp, &load, &mut k4);
        for i in 0..n {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }

        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SimulationDiverged {
                step: step + 1,
                time: (step + 1) as f64 * dt,
            });
        }
        states.row_mut(step + 1).copy_from_slice(&x);
    }

    if noise.meas_sigma_delta > 0.0 || noise.meas_sigma_omega > 0.0 {
        let mut meas_rng = ChaCha8Rng::seed_from_u64(noise.rng_seed);
        meas_rng.set_stream(1);
        for k in 0..states.nrows() {
            for c in 0..n {
                let sigma = if c < r {
                    noise.meas_sigma_delta
                } else {
                    noise.meas_sigma_omega
                };
                let xi: f64 = StandardNormal.sample(&mut meas_rng);
                states[(k, c)] += sigma * xi;
            }
        }
    }

    Ok(Trajectory {
        dt,
        t0: 0.0,
        states,
    })
}

/// Suffix of `traj` starting at the first sample with `t ≥ settle`.
///
/// At least ten steps (eleven samples) must remain.
pub fn steady_state_window(traj: &Trajectory, settle: f64) -> Result<Trajectory> {
    let m = traj.n_samples();
    let offset = (settle - traj.t0) / traj.dt;
    let start = if offset <= 0.0 {
        0
    } else {
        (offset - 1e-9).ceil() as usize
    };
    if start + 10 >= m {
        return Err(Error::InsufficientData(format!(
            "settle time {settle} s leaves fewer than 10 steps of the {} s record",
            traj.end_time()
        )));
    }
    Ok(Trajectory {
        dt: traj.dt,
        t0: traj.time(start),
        states: traj.states.rows(start, m - start).into_owned(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(m: f64, k: f64, d: f64) -> FarmModel {
        FarmModel {
            turbines: vec![TurbineParams {
                inertia: m,
                damping: d,
                sync_stiffness: k,
                mech_torque_offset: 0.0,
            }],
            coupling: vec![vec![0.0]],
            sync_speed: default_sync_speed(),
        }
    }

    #[test]
    fn equilibrium_is_fixed_point() {
        let farm = FarmModel::three_turbine_default();
        let traj = simulate(&farm, &[], &NoiseSpec::none(), &SimSettings::new(0.01, 5.0)).unwrap();
        assert_eq!(traj.n_samples(), 501);
        assert!(traj.states.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rk4_matches_analytic_oscillator() {
        let w = 2.0 * PI * 1.2;
        let farm = single(1.0, w * w, 0.0);
        let settings = SimSettings::new(0.01, 10.0).with_initial_state(vec![0.01, 0.0]);
        let traj = simulate(&farm, &[], &NoiseSpec::none(), &settings).unwrap();
        for k in (0..traj.n_samples()).step_by(97) {
            let t = traj.time(k);
            // RK4 phase error per step is about (ωh)⁵/120.
            let tol = 0.01 * (w * 0.01f64).powi(5) / 120.0 * (t / 0.01 + 1.0) * 2.0;
            assert!((traj.states[(k, 0)] - 0.01 * (w * t).cos()).abs() < tol);
            assert!((traj.states[(k, 1)] + 0.01 * w * (w * t).sin()).abs() < w * tol);
        }
    }

    #[test]
    fn invalid_turbine_index_is_config_error() {
        let farm = FarmModel::three_turbine_default();
        let f = ForcingSpec::tone(3, 0.71, 0.5, 0.0);
        let err = simulate(&farm, &[f], &NoiseSpec::none(), &SimSettings::new(0.01, 1.0));
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn divergence_names_the_step() {
        // Explicit RK4 is unstable when ω_n·dt exceeds ~2.8.
        let farm = single(1.0, 1.0e6, 0.0);
        let settings = SimSettings::new(0.01, 100.0).with_initial_state(vec![1.0, 0.0]);
        match simulate(&farm, &[], &NoiseSpec::none(), &settings) {
            Err(Error::SimulationDiverged { step, .. }) => assert!(step > 0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn duration_shorter_than_ten_steps_rejected() {
        let farm = FarmModel::three_turbine_default();
        let err = simulate(&farm, &[], &NoiseSpec::none(), &SimSettings::new(0.01, 0.05));
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn asymmetric_coupling_rejected() {
        let mut farm = FarmModel::three_turbine_default();
        farm.coupling[0][1] += 1.0;
        assert!(farm.validate().is_err());
    }

    #[test]
    fn ou_load_is_seeded() {
        let farm = FarmModel::three_turbine_default();
        let noise = NoiseSpec {
            load_sigma: 0.1,
            load_model: LoadNoiseModel::OrnsteinUhlenbeck { theta: 2.0 },
            meas_sigma_delta: 0.0,
            meas_sigma_omega: 0.0,
            rng_seed: 9,
        };
        let s = SimSettings::new(0.01, 5.0);
        let a = simulate(&farm, &[], &noise, &s).unwrap();
        let b = simulate(&farm, &[], &noise, &s).unwrap();
        assert_eq!(a, b);
        assert!(a.states.iter().any(|v| *v != 0.0));
    }

    #[test]
    fn window_boundaries() {
        let farm = FarmModel::three_turbine_default();
        let traj = simulate(&farm, &[], &NoiseSpec::none(), &SimSettings::new(0.01, 100.0)).unwrap();
        assert_eq!(steady_state_window(&traj, 0.0).unwrap(), traj);
        let w = steady_state_window(&traj, 20.0).unwrap();
        assert_eq!(w.n_samples(), 8001);
        assert!((w.t0 - 20.0).abs() < 1e-12);
        assert_eq!(w.dt, traj.dt);
        assert!(steady_state_window(&traj, 99.95).is_err());
    }
}
