//! `fuzzy-contact`: simulate, train, run and experiment subcommands.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use fuzzy_contact::bse::{run_estimator, BseError};
use fuzzy_contact::contact::{self, ContactError};
use fuzzy_contact::experiment::{
    self, generate_trial, train_on_logs, EstimatorKind, Experiment, ExperimentError, RunConfig, Summary,
};
use fuzzy_contact::io::{self, IoError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Contact(#[from] ContactError),
    #[error(transparent)]
    Estimator(#[from] BseError),
    #[error("{0}")]
    Input(String),
}

/// Contact estimation and base state estimation for a simulated biped.
#[derive(Debug, Parser)]
#[command(name = "fuzzy-contact", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration; defaults apply to missing keys.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set scenario.gait.duration=10`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Use this single seed instead of the configured seed list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EstimatorFlags {
    /// `clustering` or `threshold`.
    #[arg(long)]
    estimator: Option<String>,
    /// Normal-force threshold of the baseline estimator (N).
    #[arg(long)]
    threshold: Option<f64>,
    /// Infer contact from the wrench alone, without the foot IMU.
    #[arg(long)]
    wrench_only: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the configured scenario and write truth, sensor and slip CSVs.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Train a contact model on one or more sensor logs.
    Train {
        /// Sensor CSVs written by `simulate`.
        #[arg(long = "log", required = true)]
        logs: Vec<PathBuf>,
        /// Model file to write (default: <out-dir>/model.txt).
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the base state estimator over a sensor log.
    Run {
        /// Contact model (required by the clustering estimator).
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        sensors: PathBuf,
        /// Ground truth, for the initial state and the RMSE.
        #[arg(long)]
        truth: PathBuf,
        #[command(flatten)]
        estimator: EstimatorFlags,
        #[command(flatten)]
        common: Common,
    },
    /// Run a seeded multi-trial experiment and write its CSV.
    Experiment {
        /// threshold_sweep, cluster_vs_fixed, train_generalization,
        /// gait_generalization or imu_ablation.
        name: String,
        #[command(flatten)]
        estimator: EstimatorFlags,
        #[command(flatten)]
        common: Common,
    },
    /// Print the effective configuration as TOML.
    Config {
        #[command(flatten)]
        common: Common,
    },
}

fn resolve(common: &Common, est: Option<&EstimatorFlags>) -> Result<RunConfig, CliError> {
    let mut cfg = config::load(common.config.as_deref(), &common.overrides)?;
    if let Some(s) = common.seed {
        cfg.seeds = vec![s];
    }
    if let Some(d) = &common.out_dir {
        cfg.out_dir = d.clone();
    }
    if let Some(e) = est {
        if let Some(kind) = &e.estimator {
            cfg.estimator.kind = kind.parse::<EstimatorKind>().map_err(CliError::Config)?;
        }
        if let Some(t) = e.threshold {
            cfg.estimator.threshold = t;
        }
        if e.wrench_only {
            cfg.estimator.wrench_only = true;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(e.into()))
}

fn simulate(common: &Common) -> Result<(), CliError> {
    let cfg = resolve(common, None)?;
    let seed = cfg.seeds[0];
    let trial = generate_trial(&cfg.scenario, &cfg.noise, seed)?;
    create_dir(&cfg.out_dir)?;
    let truth = cfg.out_dir.join("truth.csv");
    let sensors = cfg.out_dir.join("sensors.csv");
    let episodes = cfg.out_dir.join("slip_episodes.csv");
    io::save_truth(&trial.truth, &truth)?;
    io::save_sensors(&trial.sensors, &sensors)?;
    io::save_episodes(&trial.truth.episodes, &episodes)?;
    println!(
        "seed {seed}: {} samples, {} slip episodes",
        trial.truth.len(),
        trial.truth.episodes.len()
    );
    for p in [truth, sensors, episodes] {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn train(logs: &[PathBuf], model_path: Option<&Path>, common: &Common) -> Result<(), CliError> {
    let cfg = resolve(common, None)?;
    let mut loaded = Vec::with_capacity(logs.len());
    for p in logs {
        let log = io::load_sensors(p)?;
        if log.is_empty() {
            return Err(CliError::Input(format!("{}: empty sensor log", p.display())));
        }
        loaded.push(log);
    }
    let refs: Vec<_> = loaded.iter().collect();
    let start = Instant::now();
    let (model, report) = train_on_logs(&refs, &cfg.training)?;
    let elapsed = start.elapsed();
    let path = model_path
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.out_dir.join("model.txt"));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    contact::save_model(&model, &path)?;
    println!("{} windows per DoF, {:.2} s", report.windows_per_dof, elapsed.as_secs_f64());
    println!("dof,iterations,final_cost,converged");
    for d in &report.dofs {
        println!("{},{},{},{}", d.dof, d.iterations, io::fmt_real(d.final_cost), d.converged);
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn run(
    model: Option<&Path>,
    sensors: &Path,
    truth: &Path,
    est: &EstimatorFlags,
    common: &Common,
) -> Result<(), CliError> {
    let cfg = resolve(common, Some(est))?;
    let model = match (cfg.estimator.kind, model) {
        (EstimatorKind::Clustering, None) => {
            return Err(CliError::Config("the clustering estimator needs --model".into()))
        }
        (EstimatorKind::Clustering, Some(p)) => Some(contact::load_model(p)?),
        (EstimatorKind::Threshold, _) => None,
    };
    let sensor_log = io::load_sensors(sensors)?;
    let truth_log = io::load_truth(truth)?;
    if sensor_log.len() != truth_log.len() {
        return Err(CliError::Input(format!(
            "sensor log has {} rows but truth has {}",
            sensor_log.len(),
            truth_log.len()
        )));
    }
    let est_cfg = cfg.estimator.config(model.as_ref(), &cfg.scenario.physics)?;
    let log = run_estimator(&truth_log.samples[0], &sensor_log, &est_cfg)?;
    let rmse = log.rmse(&truth_log)?;
    create_dir(&cfg.out_dir)?;
    let path = cfg.out_dir.join("estimates.csv");
    io::save_estimates(&log, &path)?;
    println!("x,y,z,yaw");
    println!(
        "{}",
        rmse.as_array().map(io::fmt_real).join(",")
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn run_experiment(name: &str, est: &EstimatorFlags, common: &Common) -> Result<(), CliError> {
    let experiment: Experiment = name.parse()?;
    let cfg = resolve(common, Some(est))?;
    let start = Instant::now();
    let result = experiment::run_experiment(experiment, &cfg)?;
    let path = result.save_csv(&cfg.out_dir)?;
    println!(
        "{experiment}: {} conditions x {} trials in {:.1} s",
        result.conditions.len(),
        result.seeds.len(),
        start.elapsed().as_secs_f64()
    );
    println!("condition,{}", Summary::COLUMNS.join(","));
    for c in &result.conditions {
        let s = c.summary();
        println!("{},{}", c.label, s.mean.map(|v| format!("{v:.6}")).join(","));
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate { common } => simulate(common),
        Command::Train {
            logs,
            model,
            common,
        } => train(logs, model.as_deref(), common),
        Command::Run {
            model,
            sensors,
            truth,
            estimator,
            common,
        } => run(model.as_deref(), sensors, truth, estimator, common),
        Command::Experiment {
            name,
            estimator,
            common,
        } => run_experiment(name, estimator, common),
        Command::Config { common } => resolve(common, None)
            .and_then(|c| config::to_toml(&c))
            .map(|s| print!("{s}")),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
