//! Scenario configuration and the built-in cases.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::dynamics::{FarmModel, ForcingSpec, LoadNoiseModel, NoiseSpec, SimSettings};
use crate::ensemble::{EnsembleConfig, SolverConfig};
use crate::error::{Error, Result};
use crate::signal::ZScoreParams;

/// Forcing amplitude (torque) used by the built-in cases.
pub const CASE_FORCING_AMPLITUDE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub duration: f64,
    /// Samples before this time are discarded before analysis.
    pub settle: f64,
    /// `[Δδ_1..Δδ_r, Δω_1..Δω_r]` at `t = 0`; zero when absent.
    pub initial_state: Option<Vec<f64>>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            duration: 120.0,
            settle: 20.0,
            initial_state: None,
        }
    }
}

impl SimConfig {
    pub fn settings(&self) -> SimSettings {
        SimSettings {
            dt: self.dt,
            duration: self.duration,
            initial_state: self.initial_state.clone(),
        }
    }
}

/// Which state channels feed peak detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum PeakChannels {
    Omega,
    Delta,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct SignalConfig {
    /// `[lo, hi]` in Hz.
    pub band: [f64; 2],
    pub zscore: ZScoreParams,
    /// Peaks closer than this (Hz) across channels are merged.
    pub dedup_tol: f64,
    pub channels: PeakChannels,
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            band: [0.388, 0.775],
            zscore: ZScoreParams::default(),
            dedup_tol: 0.015,
            channels: PeakChannels::Omega,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct LibraryConfig {
    pub degree: u32,
    /// Also write the evaluated library as `library.csv`.
    pub write_csv: bool,
}

impl Default for LibraryConfig {
    fn default() -> Self {
        Self {
            degree: 1,
            write_csv: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct LocateConfig {
    pub z_cutoff: f64,
    /// Amplitude floor as a fraction of the table maximum.
    pub floor_fraction: f64,
    /// Absolute amplitude floor (acceleration units); the larger floor applies.
    pub floor_min: f64,
}

impl Default for LocateConfig {
    fn default() -> Self {
        Self {
            z_cutoff: 3.0,
            floor_fraction: 0.05,
            floor_min: 0.0,
        }
    }
}

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub farm: FarmModel,
    #[serde(default)]
    pub forcings: Vec<ForcingSpec>,
    /// `rng_seed` inside is replaced by `seed`.
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub signal: SignalConfig,
    #[serde(default)]
    pub library: LibraryConfig,
    #[serde(default = "SolverConfig::lasso_cv")]
    pub regression: SolverConfig,
    /// `solver` and `rng_seed` inside are replaced by `regression` and `seed`.
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub locate: LocateConfig,
    #[serde(default)]
    pub seed: u64,
}

fn default_name() -> String {
    "custom".into()
}

/// Offset that separates the bootstrap RNG from the simulation RNG.
const ENSEMBLE_SEED_SALT: u64 = 0x5eed_b007_57a9_0001;

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Noise settings with the scenario seed applied.
    pub fn noise_spec(&self) -> NoiseSpec {
        NoiseSpec {
            rng_seed: self.seed,
            ..self.noise.clone()
        }
    }

    /// Ensemble settings with the scenario solver and seed applied.
    pub fn ensemble_config(&self) -> EnsembleConfig {
        EnsembleConfig {
            solver: self.regression.clone(),
            rng_seed: self.seed ^ ENSEMBLE_SEED_SALT,
            ..self.ensemble.clone()
        }
    }

    pub fn band(&self) -> (f64, f64) {
        (self.signal.band[0], self.signal.band[1])
    }

    pub fn validate(&self) -> Result<()> {
        self.farm.validate()?;
        let r = self.farm.n_turbines();
        for f in &self.forcings {
            if f.turbine_index >= r {
                return Err(Error::Config(format!(
                    "forcing references turbine {} but the farm has {r}",
                    f.turbine_index
                )));
            }
        }
        let s = &self.sim;
        if !(s.dt.is_finite() && s.dt > 0.0) {
            return Err(Error::Config(format!("sim.dt must be positive, got {}", s.dt)));
        }
        if !(s.duration.is_finite() && s.duration > 0.0) {
            return Err(Error::Config(format!("sim.duration must be positive, got {}", s.duration)));
        }
        if !(s.settle.is_finite() && s.settle >= 0.0 && s.settle < s.duration) {
            return Err(Error::Config(format!(
                "sim.settle must lie in [0, duration), got {}",
                s.settle
            )));
        }
        if let Some(x0) = &s.initial_state {
            if x0.len() != 2 * r {
                return Err(Error::Config(format!(
                    "sim.initial_state has {} entries, expected {}",
                    x0.len(),
                    2 * r
                )));
            }
        }
        let [lo, hi] = self.signal.band;
        if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo < hi) {
            return Err(Error::Config(format!("signal.band must satisfy 0 ≤ lo < hi, got [{lo}, {hi}]")));
        }
        let z = &self.signal.zscore;
        if z.lag < 3 || !(z.threshold > 0.0) || !(0.0..=1.0).contains(&z.influence) {
            return Err(Error::Config("zscore needs lag ≥ 3, threshold > 0, influence in [0, 1]".into()));
        }
        if !(self.signal.dedup_tol.is_finite() && self.signal.dedup_tol >= 0.0) {
            return Err(Error::Config("signal.dedup_tol must be ≥ 0".into()));
        }
        match &self.regression {
            SolverConfig::Lasso { lambda, folds, cd, .. } => {
                if let Some(l) = lambda {
                    if !(l.is_finite() && *l >= 0.0) {
                        return Err(Error::Config("regression.lambda must be ≥ 0".into()));
                    }
                }
                if lambda.is_none() && *folds < 2 {
                    return Err(Error::Config("regression.folds must be ≥ 2".into()));
                }
                if !(cd.tol > 0.0) || cd.max_iter == 0 {
                    return Err(Error::Config("regression.cd needs tol > 0 and max_iter ≥ 1".into()));
                }
            }
            SolverConfig::Stlsq { threshold, .. } => {
                if !(threshold.is_finite() && *threshold >= 0.0) {
                    return Err(Error::Config("regression.threshold must be ≥ 0".into()));
                }
            }
        }
        self.ensemble_config().validate()?;
        let l = &self.locate;
        if !(l.z_cutoff > 0.0) || !(0.0..=1.0).contains(&l.floor_fraction) || !(l.floor_min >= 0.0) {
            return Err(Error::Config(
                "locate needs z_cutoff > 0, floor_fraction in [0, 1], floor_min ≥ 0".into(),
            ));
        }
        Ok(())
    }

    /// Same scenario with every forcing removed.
    pub fn without_forcing(mut self) -> Self {
        self.forcings.clear();
        self
    }
}

/// JSON schema of [`ScenarioConfig`].
pub fn config_schema() -> Result<String> {
    Ok(serde_json::to_string_pretty(&schemars::schema_for!(ScenarioConfig))?)
}

/// Names of the built-in scenarios.
pub const BUILTIN_CASES: [&str; 3] = ["case1", "case2", "case3"];

/// `(turbine index, frequency)` sources of each built-in case.
pub fn case_sources(name: &str) -> Option<Vec<(usize, f64)>> {
    match name {
        "case1" => Some(vec![(0, 0.71)]),
        "case2" => Some(vec![(0, 0.71), (2, 0.53)]),
        "case3" => Some(vec![(0, 0.71), (1, 0.61), (2, 0.53)]),
        _ => None,
    }
}

pub fn case_description(name: &str) -> Option<&'static str> {
    match name {
        "case1" => Some("0.71 Hz forcing on WT1"),
        "case2" => Some("0.71 Hz on WT1 and 0.53 Hz on WT3"),
        "case3" => Some("0.71 Hz on WT1, 0.61 Hz on WT2 and 0.53 Hz on WT3"),
        _ => None,
    }
}

/// Noise used by the built-in cases: white load torque plus sensor noise.
pub fn case_noise() -> NoiseSpec {
    NoiseSpec {
        load_sigma: 0.02,
        load_model: LoadNoiseModel::White,
        meas_sigma_delta: 1e-5,
        meas_sigma_omega: 1e-4,
        rng_seed: 0,
    }
}

/// Absolute amplitude floor of the built-in cases: an order of magnitude above
/// the spurious sinusoid coefficients seen in unforced runs of the default farm.
pub const CASE_AMPLITUDE_FLOOR: f64 = 0.02;

/// A built-in case on the default three-turbine farm.
pub fn builtin_case(name: &str) -> Option<ScenarioConfig> {
    let forcings = case_sources(name)?
        .into_iter()
        .map(|(turbine, f)| ForcingSpec::tone(turbine, f, CASE_FORCING_AMPLITUDE, 0.0))
        .collect();
    Some(ScenarioConfig {
        name: name.to_string(),
        farm: FarmModel::three_turbine_default(),
        forcings,
        noise: case_noise(),
        sim: SimConfig::default(),
        signal: SignalConfig::default(),
        library: LibraryConfig::default(),
        regression: SolverConfig::lasso_cv(),
        ensemble: EnsembleConfig::default(),
        locate: LocateConfig {
            floor_min: CASE_AMPLITUDE_FLOOR,
            ..LocateConfig::default()
        },
        seed: 0,
    })
}
