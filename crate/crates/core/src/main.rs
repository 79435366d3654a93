use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fo_locate::ensemble::SolverConfig;
use fo_locate::error::Error;
use fo_locate::pipeline::{analyze_external, run_pipeline, run_simulation, RunOutput, StageError};
use fo_locate::scenario::{builtin_case, case_description, config_schema, ScenarioConfig, BUILTIN_CASES};

const EXIT_CONFIG: u8 = 2;
const EXIT_INGESTION: u8 = 3;
const EXIT_STAGE: u8 = 4;

#[derive(Parser)]
#[command(name = "fo-locate", version, about = "Locate forced-oscillation sources in a wind farm")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write its trajectory.
    Simulate(Common),
    /// Run identification on a trajectory CSV.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Trajectory CSV (`t,delta_1..,omega_1..`).
        #[arg(long)]
        input: PathBuf,
        /// Override the settle time (s) applied on the file's clock.
        #[arg(long)]
        settle: Option<f64>,
    },
    /// Simulate and identify in one go.
    Run(Common),
    /// List the built-in scenarios.
    Cases {
        /// Print the full JSON of this case instead of the list.
        #[arg(long)]
        show: Option<String>,
    },
    /// Print the JSON schema of scenario configs.
    Schema,
}

#[derive(Args)]
struct Common {
    /// Config file, or the name of a built-in case.
    #[arg(long, default_value = "case1")]
    config: String,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    solver: Option<Solver>,
    /// STLSQ threshold used with `--solver stlsq`.
    #[arg(long, default_value_t = 0.05)]
    threshold: f64,
    /// Drop every forcing from the scenario.
    #[arg(long)]
    no_forcing: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Solver {
    Lasso,
    Stlsq,
}

fn load_config(common: &Common) -> Result<ScenarioConfig, Error> {
    let mut cfg = match builtin_case(&common.config) {
        Some(cfg) => cfg,
        None => {
            let text = std::fs::read_to_string(&common.config).map_err(|e| {
                Error::Config(format!(
                    "{} is neither a built-in case ({}) nor a readable file: {e}",
                    common.config,
                    BUILTIN_CASES.join(", ")
                ))
            })?;
            ScenarioConfig::from_json(&text)?
        }
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    match common.solver {
        Some(Solver::Lasso) if !matches!(cfg.regression, SolverConfig::Lasso { .. }) => {
            cfg.regression = SolverConfig::lasso_cv();
        }
        Some(Solver::Stlsq) => {
            cfg.regression = SolverConfig::Stlsq {
                threshold: common.threshold,
                max_sweeps: 10,
            };
        }
        _ => {}
    }
    if common.no_forcing {
        cfg = cfg.without_forcing();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn init_threads() -> Result<(), Error> {
    let threads = match std::env::var("FO_LOCATE_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("FO_LOCATE_THREADS must be a non-negative integer, got {v:?}")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn exit_for(err: &Error) -> u8 {
    if err.is_ingestion() {
        EXIT_INGESTION
    } else if matches!(err, Error::Config(_)) {
        EXIT_CONFIG
    } else {
        EXIT_STAGE
    }
}

fn report_stage_error(e: &StageError) -> ExitCode {
    eprintln!("error: {e}");
    if let Some(m) = &e.manifest {
        eprintln!("partial results recorded in {}", m.display());
    }
    ExitCode::from(exit_for(&e.error))
}

fn summarize(out: &RunOutput) {
    let freqs: Vec<String> = out.candidates.freqs.iter().map(|f| format!("{f:.2}")).collect();
    println!("candidates (Hz): [{}]", freqs.join(", "));
    if out.report.detected.is_empty() {
        println!("no forced-oscillation source flagged");
    }
    for d in &out.report.detected {
        println!(
            "source: {} at {:.2} Hz, amplitude {:.4}",
            d.turbine_label, d.frequency_hz, d.amplitude
        );
    }
    println!("artifacts in {}", out.artifacts.outdir.display());
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    let with_config = |common: &Common| {
        load_config(common).map_err(|e| {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        })
    };
    match cli.command {
        Command::Cases { show: Some(name) } => match builtin_case(&name).map(|c| c.to_json()) {
            Some(Ok(json)) => {
                println!("{json}");
                ExitCode::SUCCESS
            }
            Some(Err(e)) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_STAGE)
            }
            None => {
                eprintln!("error: unknown case {name:?}");
                ExitCode::from(EXIT_CONFIG)
            }
        },
        Command::Cases { show: None } => {
            for name in BUILTIN_CASES {
                println!("{name}\t{}", case_description(name).unwrap_or(""));
            }
            ExitCode::SUCCESS
        }
        Command::Schema => match config_schema() {
            Ok(s) => {
                println!("{s}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_STAGE)
            }
        },
        Command::Simulate(common) => {
            let cfg = match with_config(&common) {
                Ok(c) => c,
                Err(code) => return code,
            };
            match run_simulation(&cfg, &common.out) {
                Ok(a) => {
                    println!("trajectory written to {}", a.trajectory.unwrap_or_default().display());
                    ExitCode::SUCCESS
                }
                Err(e) => report_stage_error(&e),
            }
        }
        Command::Run(common) => {
            let cfg = match with_config(&common) {
                Ok(c) => c,
                Err(code) => return code,
            };
            match run_pipeline(&cfg, &common.out) {
                Ok(out) => {
                    summarize(&out);
                    ExitCode::SUCCESS
                }
                Err(e) => report_stage_error(&e),
            }
        }
        Command::Analyze {
            common,
            input,
            settle,
        } => {
            let mut cfg = match with_config(&common) {
                Ok(c) => c,
                Err(code) => return code,
            };
            if let Some(s) = settle {
                cfg.sim.settle = s;
            }
            match analyze_external(&input, &cfg, &common.out) {
                Ok(out) => {
                    summarize(&out);
                    ExitCode::SUCCESS
                }
                Err(e) => report_stage_error(&e),
            }
        }
    }
}
