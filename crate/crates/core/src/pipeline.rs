//! End-to-end orchestration: simulate (or ingest) → spectra → candidates →
//! library → ensemble → amplitudes → flagged sources, with every artifact
//! written to one output directory and hashed into a manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::dynamics::{simulate, steady_state_window, Trajectory};
use crate::ensemble::fit_ensemble;
use crate::error::{Error, Result};
use crate::io::{read_trajectory_csv, sha256_file, write_text, write_trajectory_csv};
use crate::library::build_library;
use crate::locate::{extract_amplitudes, flag_sources, turbine_labels, ForcingAmplitudeTable, LocalizationReport};
use crate::scenario::{PeakChannels, ScenarioConfig};
use crate::signal::{amplitude_spectrum, dedup_frequencies, finite_difference, zscore_peaks, CandidateFrequencies, Peak};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const CANDIDATES_FILE: &str = "candidates.json";
pub const LIBRARY_FILE: &str = "library.csv";
pub const ENSEMBLE_FILE: &str = "ensemble.json";
pub const COEFFICIENTS_FILE: &str = "coefficients.csv";
pub const AMPLITUDES_FILE: &str = "amplitudes.csv";
pub const REPORT_FILE: &str = "report.json";
pub const MANIFEST_FILE: &str = "manifest.json";

const LOAD_NOISE_NOTE: &str = "wind-speed driven mechanical torque variation is not modeled directly; \
it is approximated by the stochastic load-torque channel";

/// A failure tagged with the pipeline stage that raised it.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub error: Error,
    /// Manifest written for the partial run, if the directory was usable.
    pub manifest: Option<PathBuf>,
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "stage `{}` failed: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Paths of everything a run wrote.
#[derive(Debug, Clone, Default)]
pub struct RunArtifacts {
    pub outdir: PathBuf,
    pub trajectory: Option<PathBuf>,
    pub spectra: Vec<PathBuf>,
    pub candidates: Option<PathBuf>,
    pub library: Option<PathBuf>,
    pub ensemble: Option<PathBuf>,
    pub coefficients: Option<PathBuf>,
    pub amplitudes: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub manifest: PathBuf,
}

/// In-memory results of a full run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub artifacts: RunArtifacts,
    pub candidates: CandidateFrequencies,
    pub report: LocalizationReport,
}

#[derive(Serialize)]
struct StageTiming {
    stage: &'static str,
    seconds: f64,
}

#[derive(Serialize)]
struct FileEntry {
    name: String,
    bytes: u64,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    mode: &'static str,
    status: &'static str,
    failed_stage: Option<&'static str>,
    error: Option<String>,
    seed: u64,
    input: Option<String>,
    threads: usize,
    timings: &'a [StageTiming],
    notes: Vec<&'static str>,
    files: Vec<FileEntry>,
    config: &'a ScenarioConfig,
}

#[derive(Serialize)]
struct CandidateDump<'a> {
    band: [f64; 2],
    channels: Vec<&'a str>,
    peaks: Vec<ChannelPeaks<'a>>,
    candidates: &'a CandidateFrequencies,
}

#[derive(Serialize)]
struct ChannelPeaks<'a> {
    channel: &'a str,
    peaks: &'a [Peak],
}

struct Runner<'a> {
    cfg: &'a ScenarioConfig,
    outdir: PathBuf,
    mode: &'static str,
    input: Option<String>,
    timings: Vec<StageTiming>,
    artifacts: RunArtifacts,
}

impl<'a> Runner<'a> {
    fn new(
        cfg: &'a ScenarioConfig,
        outdir: &Path,
        mode: &'static str,
        keep: Option<&Path>,
    ) -> std::result::Result<Self, StageError> {
        let fail = |error| StageError {
            stage: "prepare_outdir",
            error,
            manifest: None,
        };
        fs::create_dir_all(outdir).map_err(|e| fail(Error::io(outdir, e)))?;
        clear_stale(outdir, keep).map_err(fail)?;
        Ok(Self {
            cfg,
            outdir: outdir.to_path_buf(),
            mode,
            input: None,
            timings: Vec::new(),
            artifacts: RunArtifacts {
                outdir: outdir.to_path_buf(),
                manifest: outdir.join(MANIFEST_FILE),
                ..Default::default()
            },
        })
    }

    fn stage<T>(&mut self, name: &'static str, f: impl FnOnce(&mut Self) -> Result<T>) -> std::result::Result<T, StageError> {
        let start = Instant::now();
        let out = f(self);
        self.timings.push(StageTiming {
            stage: name,
            seconds: start.elapsed().as_secs_f64(),
        });
        match out {
            Ok(v) => Ok(v),
            Err(error) => {
                let manifest = self
                    .write_manifest(Some((name, &error)))
                    .ok()
                    .map(|_| self.artifacts.manifest.clone());
                Err(StageError {
                    stage: name,
                    error,
                    manifest,
                })
            }
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.outdir.join(name)
    }

    fn write_manifest(&self, failure: Option<(&'static str, &Error)>) -> Result<()> {
        let mut files = Vec::new();
        let mut names: Vec<String> = fs::read_dir(&self.outdir)
            .map_err(|e| Error::io(&self.outdir, e))?
            .filter_map(|e| e.ok())
            .filter(|e| e.file_type().map(|t| t.is_file()).unwrap_or(false))
            .filter_map(|e| e.file_name().into_string().ok())
            .filter(|n| n != MANIFEST_FILE)
            .collect();
        names.sort();
        for name in names {
            let path = self.path(&name);
            let bytes = fs::metadata(&path).map_err(|e| Error::io(&path, e))?.len();
            files.push(FileEntry {
                sha256: sha256_file(&path)?,
                name,
                bytes,
            });
        }
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            mode: self.mode,
            status: if failure.is_some() { "failed" } else { "ok" },
            failed_stage: failure.map(|f| f.0),
            error: failure.map(|f| f.1.to_string()),
            seed: self.cfg.seed,
            input: self.input.clone(),
            threads: rayon::current_num_threads(),
            timings: &self.timings,
            notes: vec![LOAD_NOISE_NOTE],
            files,
            config: self.cfg,
        };
        write_text(&self.artifacts.manifest, &serde_json::to_string_pretty(&manifest)?)
    }

    /// Everything after the trajectory is in hand.
    fn analyze(&mut self, traj: &Trajectory) -> std::result::Result<RunOutput, StageError> {
        let cfg = self.cfg;
        let window = self.stage("steady_state_window", |_| steady_state_window(traj, cfg.sim.settle))?;
        let ms = self.stage("finite_difference", |_| finite_difference(&window))?;

        let r = window.n_turbines();
        let channels: Vec<usize> = match cfg.signal.channels {
            PeakChannels::Omega => (r..2 * r).collect(),
            PeakChannels::Delta => (0..r).collect(),
            PeakChannels::Both => (0..2 * r).collect(),
        };
        let spectra = self.stage("spectra", |run| {
            let mut out = Vec::with_capacity(channels.len());
            for &c in &channels {
                let spec = amplitude_spectrum(&window, c)?;
                let path = run.path(&format!("spectrum_{}.csv", spec.channel_label));
                write_text(&path, &spec.to_csv())?;
                run.artifacts.spectra.push(path);
                out.push(spec);
            }
            Ok(out)
        })?;

        let band = cfg.band();
        let peak_lists = self.stage("zscore_peaks", |_| {
            spectra
                .iter()
                .map(|s| Ok((s.channel_label.clone(), zscore_peaks(s, &cfg.signal.zscore, band)?)))
                .collect::<Result<Vec<_>>>()
        })?;

        let candidates = self.stage("dedup", |run| {
            let cands = dedup_frequencies(&peak_lists, cfg.signal.dedup_tol)?;
            let dump = CandidateDump {
                band: cfg.signal.band,
                channels: peak_lists.iter().map(|(c, _)| c.as_str()).collect(),
                peaks: peak_lists
                    .iter()
                    .map(|(c, p)| ChannelPeaks { channel: c, peaks: p })
                    .collect(),
                candidates: &cands,
            };
            let path = run.path(CANDIDATES_FILE);
            write_text(&path, &serde_json::to_string_pretty(&dump)?)?;
            run.artifacts.candidates = Some(path);
            Ok(cands)
        })?;

        let lib = self.stage("build_library", |run| {
            let lib = build_library(&ms, &candidates, cfg.library.degree)?;
            if cfg.library.write_csv {
                let path = run.path(LIBRARY_FILE);
                lib.write_csv(&path)?;
                run.artifacts.library = Some(path);
            }
            Ok(lib)
        })?;

        let model = self.stage("fit_ensemble", |run| {
            let model = fit_ensemble(&lib, &ms, &cfg.ensemble_config())?;
            let path = run.path(ENSEMBLE_FILE);
            write_text(&path, &model.to_json()?)?;
            run.artifacts.ensemble = Some(path);
            let path = run.path(COEFFICIENTS_FILE);
            model.write_coefficients_csv(&path)?;
            run.artifacts.coefficients = Some(path);
            Ok(model)
        })?;

        let table = self.stage("extract_amplitudes", |run| {
            let table = extract_amplitudes(&model)?;
            let path = run.path(AMPLITUDES_FILE);
            write_text(&path, &table.to_csv())?;
            run.artifacts.amplitudes = Some(path);
            Ok(table)
        })?;

        let report = self.stage("flag_sources", |run| {
            let report = locate(&table, cfg)?;
            let path = run.path(REPORT_FILE);
            write_text(&path, &report.to_json()?)?;
            run.artifacts.report = Some(path);
            Ok(report)
        })?;

        self.write_manifest(None).map_err(|error| StageError {
            stage: "write_manifest",
            error,
            manifest: None,
        })?;
        Ok(RunOutput {
            artifacts: self.artifacts.clone(),
            candidates,
            report,
        })
    }
}

/// Flags sources with the configured thresholds; an empty table (no
/// candidates survived detection) yields an empty report.
pub fn locate(table: &ForcingAmplitudeTable, cfg: &ScenarioConfig) -> Result<LocalizationReport> {
    let floor = (cfg.locate.floor_fraction * table.max()).max(cfg.locate.floor_min);
    let inertias: Vec<f64> = cfg.farm.turbines.iter().map(|t| t.inertia).collect();
    let report = if table.freqs.is_empty() {
        LocalizationReport {
            detected: Vec::new(),
            table: ForcingAmplitudeTable {
                turbine_labels: turbine_labels(cfg.farm.n_turbines().max(table.turbine_labels.len())),
                ..table.clone()
            },
            method: "no candidate frequencies; nothing to flag".into(),
            z_cutoff: cfg.locate.z_cutoff,
            floor,
            median: 0.0,
            mad: 0.0,
        }
    } else {
        flag_sources(table, cfg.locate.z_cutoff, floor)?
    };
    if inertias.len() == table.turbine_labels.len() {
        Ok(report.with_inertias(&inertias))
    } else {
        Ok(report)
    }
}

/// Removes artifacts of an earlier run so the manifest describes this one.
fn clear_stale(outdir: &Path, keep: Option<&Path>) -> Result<()> {
    let keep = keep.and_then(|p| fs::canonicalize(p).ok());
    let fixed = [
        TRAJECTORY_FILE,
        CANDIDATES_FILE,
        LIBRARY_FILE,
        ENSEMBLE_FILE,
        COEFFICIENTS_FILE,
        AMPLITUDES_FILE,
        REPORT_FILE,
        MANIFEST_FILE,
    ];
    for entry in fs::read_dir(outdir).map_err(|e| Error::io(outdir, e))? {
        let entry = entry.map_err(|e| Error::io(outdir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let ours = fixed.contains(&name.as_str()) || (name.starts_with("spectrum_") && name.ends_with(".csv"));
        let kept = keep.is_some() && fs::canonicalize(entry.path()).ok() == keep;
        if ours && !kept {
            fs::remove_file(entry.path()).map_err(|e| Error::io(entry.path(), e))?;
        }
    }
    Ok(())
}

fn config_stage(cfg: &ScenarioConfig) -> std::result::Result<(), StageError> {
    cfg.validate().map_err(|error| StageError {
        stage: "validate_config",
        error,
        manifest: None,
    })
}

/// Simulates the scenario and writes only the trajectory (plus manifest).
pub fn run_simulation(cfg: &ScenarioConfig, outdir: &Path) -> std::result::Result<RunArtifacts, StageError> {
    config_stage(cfg)?;
    let mut run = Runner::new(cfg, outdir, "simulate", None)?;
    simulate_stage(&mut run)?;
    run.write_manifest(None).map_err(|error| StageError {
        stage: "write_manifest",
        error,
        manifest: None,
    })?;
    Ok(run.artifacts)
}

fn simulate_stage(run: &mut Runner<'_>) -> std::result::Result<Trajectory, StageError> {
    let cfg = run.cfg;
    run.stage("simulate", |run| {
        let traj = simulate(&cfg.farm, &cfg.forcings, &cfg.noise_spec(), &cfg.sim.settings())?;
        let path = run.path(TRAJECTORY_FILE);
        write_trajectory_csv(&path, &traj)?;
        run.artifacts.trajectory = Some(path);
        Ok(traj)
    })
}

/// Full pipeline from simulation to the localization report.
pub fn run_pipeline(cfg: &ScenarioConfig, outdir: &Path) -> std::result::Result<RunOutput, StageError> {
    config_stage(cfg)?;
    let mut run = Runner::new(cfg, outdir, "run", None)?;
    let traj = simulate_stage(&mut run)?;
    run.analyze(&traj)
}

/// Pipeline on a trajectory CSV; `cfg.sim.settle` is applied on the file's clock.
pub fn analyze_external(csv_path: &Path, cfg: &ScenarioConfig, outdir: &Path) -> std::result::Result<RunOutput, StageError> {
    config_stage(cfg)?;
    let mut run = Runner::new(cfg, outdir, "analyze", Some(csv_path))?;
    run.input = Some(csv_path.display().to_string());
    let traj = run.stage("ingest", |_| {
        let traj = read_trajectory_csv(csv_path)?;
        if traj.n_turbines() != cfg.farm.n_turbines() {
            log::warn!(
                "input has {} turbines, configured farm has {}; torque equivalents are omitted",
                traj.n_turbines(),
                cfg.farm.n_turbines()
            );
        }
        Ok(traj)
    })?;
    run.analyze(&traj)
}
