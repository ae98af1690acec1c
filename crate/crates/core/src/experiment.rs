//! Seeded multi-trial experiments comparing contact gating strategies.
//!
//! A trial simulates one scenario with the trial seed (terrain jitter,
//! scripted disturbances and sensor noise all derive from it), runs every
//! condition's estimator over the same corrupted log, and records base
//! position and yaw RMSE. Models are trained once per experiment on data
//! generated with a separate training seed.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bse::{
    run_estimator, BseError, EstimateLog, EstimatorConfig, Gating, MeasurementNoise, ProcessNoise,
    TrackingRmse,
};
use crate::contact::{train, ContactError, ContactEstimator, ContactModel, TrainingConfig, TrainingReport, DEFAULT_CONTACT_THRESHOLD};
use crate::fcm::FcmConfig;
use crate::features::WindowSpec;
use crate::io::{fmt_real, IoError};
use crate::kinematics::Side;
use crate::scenario::gait::{mixed_schedule, GaitMode, GaitScript};
use crate::scenario::terrain::Terrain;
use crate::scenario::{
    patch_under_start, patches_along_path, run_scenario, GroundTruthLog, PhysicsConfig, ScenarioError,
    SlipEpisode,
};
use crate::sensors::{corrupt_log, NoiseSpec, SensorError, SensorLog};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),
    #[error("seed {seed}: {source}")]
    Scenario { seed: u64, source: ScenarioError },
    #[error(transparent)]
    Sensor(#[from] SensorError),
    #[error(transparent)]
    Contact(#[from] ContactError),
    #[error("seed {seed}, condition `{condition}`: {source}")]
    Estimator {
        seed: u64,
        condition: String,
        source: BseError,
    },
    #[error(transparent)]
    Io(#[from] IoError),
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

/// Terrain layout, instantiated per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TerrainSpec {
    Flat,
    /// Rough patches along the walking path; lateral jitter is seeded.
    PatchesAlongPath { start: f64, spacing: f64, jitter: f64 },
    /// One rough patch under the start position.
    PatchUnderStart,
}

impl TerrainSpec {
    pub fn build(&self, gait: &GaitScript, physics: &PhysicsConfig, seed: u64) -> Terrain {
        match *self {
            TerrainSpec::Flat => Terrain::flat(),
            TerrainSpec::PatchesAlongPath {
                start,
                spacing,
                jitter,
            } => patches_along_path(gait, physics, start, spacing, jitter, seed),
            TerrainSpec::PatchUnderStart => patch_under_start(),
        }
    }
}

/// Gait, terrain and physics of one simulated task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub gait: GaitScript,
    pub terrain: TerrainSpec,
    /// Re-draw the support durations every `mixed_segment` seconds from the
    /// seed (mixed gait); zero keeps the gait's schedule as given.
    pub mixed_segment: f64,
    pub physics: PhysicsConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::rough_walk()
    }
}

impl ScenarioConfig {
    /// Fast walk over a row of low-friction patches.
    pub fn rough_walk() -> Self {
        Self {
            gait: GaitScript::default(),
            terrain: TerrainSpec::PatchesAlongPath {
                start: 1.0,
                spacing: 1.5,
                jitter: 0.08,
            },
            mixed_segment: 0.0,
            physics: PhysicsConfig::default(),
        }
    }

    pub fn flat_walk_in_place() -> Self {
        Self {
            gait: GaitScript {
                mode: GaitMode::WalkInPlace,
                ..GaitScript::default()
            },
            terrain: TerrainSpec::Flat,
            ..Self::rough_walk()
        }
    }

    /// Flat-ground walking with a slowly oscillating heading.
    pub fn flat_turning_walk() -> Self {
        Self {
            gait: GaitScript {
                heading_amplitude: 0.6,
                heading_period: 20.0,
                ..GaitScript::default()
            },
            terrain: TerrainSpec::Flat,
            ..Self::rough_walk()
        }
    }

    /// Mixed-gait walk in place on one rough patch.
    pub fn mixed_patch_in_place() -> Self {
        Self {
            gait: GaitScript {
                mode: GaitMode::WalkInPlace,
                ..GaitScript::default()
            },
            terrain: TerrainSpec::PatchUnderStart,
            mixed_segment: 5.0,
            ..Self::rough_walk()
        }
    }

    pub fn with_timing(mut self, t: crate::scenario::GaitTiming) -> Self {
        self.gait = self.gait.with_timing(t);
        self
    }

    pub fn with_duration(mut self, duration: f64) -> Self {
        self.gait.duration = duration;
        self
    }

    pub fn gait_for_seed(&self, seed: u64) -> GaitScript {
        let mut g = self.gait.clone();
        if self.mixed_segment > 0.0 {
            g.gait_schedule = mixed_schedule(g.duration, self.mixed_segment, seed);
        }
        g
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: ScenarioError| ExperimentError::Config(e.to_string());
        self.gait.validate().map_err(wrap)?;
        self.physics.validate().map_err(wrap)?;
        if !(self.mixed_segment.is_finite() && self.mixed_segment >= 0.0) {
            return Err(ExperimentError::Config("mixed_segment must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn simulate(&self, seed: u64) -> Result<GroundTruthLog> {
        let gait = self.gait_for_seed(seed);
        let terrain = self.terrain.build(&gait, &self.physics, seed);
        run_scenario(&gait, &terrain, &self.physics, seed)
            .map_err(|source| ExperimentError::Scenario { seed, source })
    }
}

/// Truth and corrupted sensors of one seeded run.
#[derive(Debug, Clone)]
pub struct Trial {
    pub seed: u64,
    pub truth: GroundTruthLog,
    pub sensors: SensorLog,
}

pub fn generate_trial(scenario: &ScenarioConfig, noise: &NoiseSpec, seed: u64) -> Result<Trial> {
    let truth = scenario.simulate(seed)?;
    let sensors = corrupt_log(&truth, &NoiseSpec { seed, ..*noise })?;
    Ok(Trial {
        seed,
        truth,
        sensors,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSettings {
    /// Samples per feature block (`T`).
    pub window: usize,
    pub stride: usize,
    pub hop: usize,
    pub min_windows: usize,
    pub min_contact_force: f64,
    pub fcm: FcmConfig,
}

impl Default for TrainingSettings {
    fn default() -> Self {
        let t = TrainingConfig::default();
        Self {
            window: t.window.len,
            stride: t.window.stride,
            hop: t.hop,
            min_windows: t.min_windows,
            min_contact_force: t.min_contact_force,
            fcm: t.fcm,
        }
    }
}

impl TrainingSettings {
    pub fn config(&self) -> Result<TrainingConfig> {
        let window = WindowSpec::new(self.window, self.stride)
            .map_err(|e| ExperimentError::Config(e.to_string()))?;
        self.fcm
            .validate()
            .map_err(|e| ExperimentError::Config(e.to_string()))?;
        Ok(TrainingConfig {
            fcm: self.fcm,
            window,
            hop: self.hop,
            min_windows: self.min_windows,
            min_contact_force: self.min_contact_force,
        })
    }
}

/// Trains on both feet of one or more sensor logs.
pub fn train_on_logs(logs: &[&SensorLog], settings: &TrainingSettings) -> Result<(ContactModel, TrainingReport)> {
    let histories: Vec<_> = logs
        .iter()
        .flat_map(|l| Side::BOTH.map(|s| l.history(s)))
        .collect();
    Ok(train(&histories, &settings.config()?)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Clustering,
    Threshold,
}

impl FromStr for EstimatorKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "clustering" => Ok(Self::Clustering),
            "threshold" | "fixed-threshold" | "fixed_threshold" => Ok(Self::Threshold),
            _ => Err(format!("unknown estimator `{s}` (expected clustering or threshold)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSettings {
    pub kind: EstimatorKind,
    /// Normal-force threshold of the baseline (N).
    pub threshold: f64,
    /// Every DoF's probability must exceed this to gate a foot in.
    pub contact_threshold: f64,
    pub wrench_only: bool,
    pub measurement: MeasurementNoise,
    pub process: ProcessNoise,
    pub initial_std: f64,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        let base = EstimatorConfig::new(Gating::Threshold(200.0));
        Self {
            kind: EstimatorKind::Clustering,
            threshold: 200.0,
            contact_threshold: DEFAULT_CONTACT_THRESHOLD,
            wrench_only: false,
            measurement: base.measurement,
            process: base.process,
            initial_std: base.initial_std,
        }
    }
}

impl EstimatorSettings {
    fn with_gating(&self, gating: Gating, physics: &PhysicsConfig) -> EstimatorConfig {
        let mut cfg = EstimatorConfig::new(gating);
        cfg.measurement = self.measurement;
        cfg.process = self.process;
        cfg.initial_std = self.initial_std;
        cfg.leg = physics.leg();
        cfg
    }

    pub fn clustering(&self, model: &ContactModel, wrench_only: bool, physics: &PhysicsConfig) -> EstimatorConfig {
        self.with_gating(
            Gating::Clustering {
                model: model.clone(),
                wrench_only,
                contact_threshold: self.contact_threshold,
            },
            physics,
        )
    }

    pub fn fixed_threshold(&self, threshold: f64, physics: &PhysicsConfig) -> EstimatorConfig {
        self.with_gating(Gating::Threshold(threshold), physics)
    }

    /// The configured estimator; clustering needs a model.
    pub fn config(&self, model: Option<&ContactModel>, physics: &PhysicsConfig) -> Result<EstimatorConfig> {
        match self.kind {
            EstimatorKind::Threshold => Ok(self.fixed_threshold(self.threshold, physics)),
            EstimatorKind::Clustering => model
                .map(|m| self.clustering(m, self.wrench_only, physics))
                .ok_or_else(|| ExperimentError::Config("the clustering estimator needs a model".into())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: BseError| ExperimentError::Config(e.to_string());
        self.measurement.validate().map_err(wrap)?;
        self.process.validate().map_err(wrap)?;
        if !self.threshold.is_finite() {
            return Err(ExperimentError::Config("threshold must be finite".into()));
        }
        if !(0.0..1.0).contains(&self.contact_threshold) {
            return Err(ExperimentError::Config("contact_threshold must lie in [0, 1)".into()));
        }
        if !(self.initial_std.is_finite() && self.initial_std > 0.0) {
            return Err(ExperimentError::Config("initial_std must be positive".into()));
        }
        Ok(())
    }
}

/// Everything a run or experiment needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub noise: NoiseSpec,
    pub training: TrainingSettings,
    pub estimator: EstimatorSettings,
    /// Seed of the data the contact models are trained on.
    pub training_seed: u64,
    /// Trial seeds.
    pub seeds: Vec<u64>,
    /// Thresholds compared by the threshold sweep (N).
    pub thresholds: Vec<f64>,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::rough_walk(),
            noise: NoiseSpec::default(),
            training: TrainingSettings::default(),
            estimator: EstimatorSettings::default(),
            training_seed: 1000,
            seeds: (0..10).collect(),
            thresholds: vec![10.0, 40.0, 100.0, 200.0, 400.0],
            out_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(ExperimentError::Config("seed list must not be empty".into()));
        }
        if !(self.scenario.gait.duration.is_finite() && self.scenario.gait.duration > 0.0) {
            return Err(ExperimentError::Config("duration must be positive".into()));
        }
        if self.thresholds.iter().any(|t| !t.is_finite()) {
            return Err(ExperimentError::Config("thresholds must be finite".into()));
        }
        self.scenario.validate()?;
        self.noise
            .validate()
            .map_err(|e| ExperimentError::Config(e.to_string()))?;
        self.training.config()?;
        self.estimator.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    ThresholdSweep,
    ClusterVsFixed,
    TrainGeneralization,
    GaitGeneralization,
    ImuAblation,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::ThresholdSweep,
        Experiment::ClusterVsFixed,
        Experiment::TrainGeneralization,
        Experiment::GaitGeneralization,
        Experiment::ImuAblation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::ThresholdSweep => "threshold_sweep",
            Experiment::ClusterVsFixed => "cluster_vs_fixed",
            Experiment::TrainGeneralization => "train_generalization",
            Experiment::GaitGeneralization => "gait_generalization",
            Experiment::ImuAblation => "imu_ablation",
        }
    }
}

impl FromStr for Experiment {
    type Err = ExperimentError;
    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| ExperimentError::UnknownExperiment(s.to_string()))
    }
}

impl std::fmt::Display for Experiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-trial RMSE of one condition, in seed order.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionResult {
    pub label: String,
    pub trials: Vec<TrackingRmse>,
}

/// Sample mean and sample deviation (n - 1) of each RMSE column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: [f64; 5],
    pub std: [f64; 5],
}

impl Summary {
    pub const COLUMNS: [&'static str; 5] = ["x", "y", "z", "yaw", "position"];

    pub fn position(&self) -> f64 {
        self.mean[4]
    }

    pub fn yaw(&self) -> f64 {
        self.mean[3]
    }
}

fn row_of(r: &TrackingRmse) -> [f64; 5] {
    [r.x, r.y, r.z, r.yaw, r.position()]
}

impl ConditionResult {
    pub fn summary(&self) -> Summary {
        let n = self.trials.len() as f64;
        let mut mean = [0.0; 5];
        for t in &self.trials {
            for (m, v) in mean.iter_mut().zip(row_of(t)) {
                *m += v / n;
            }
        }
        let mut std = [0.0; 5];
        if self.trials.len() > 1 {
            for t in &self.trials {
                for ((s, v), m) in std.iter_mut().zip(row_of(t)).zip(mean) {
                    *s += (v - m).powi(2) / (n - 1.0);
                }
            }
            std = std.map(f64::sqrt);
        }
        Summary { mean, std }
    }
}

/// Worst filter-invariant values seen over every estimator run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvariantReport {
    pub runs: usize,
    pub max_quaternion_norm_error: f64,
    pub min_covariance_eigenvalue: f64,
    pub max_asymmetry: f64,
}

impl Default for InvariantReport {
    fn default() -> Self {
        Self {
            runs: 0,
            max_quaternion_norm_error: 0.0,
            min_covariance_eigenvalue: f64::INFINITY,
            max_asymmetry: 0.0,
        }
    }
}

impl InvariantReport {
    pub fn record(&mut self, log: &EstimateLog) {
        self.runs += 1;
        self.max_quaternion_norm_error = self.max_quaternion_norm_error.max(log.max_quaternion_norm_error);
        self.min_covariance_eigenvalue = self.min_covariance_eigenvalue.min(log.min_covariance_eigenvalue);
        self.max_asymmetry = self.max_asymmetry.max(log.max_asymmetry);
    }

    /// Unit quaternions within 1e-9 and PSD covariance within -1e-10.
    pub fn holds(&self) -> bool {
        self.max_quaternion_norm_error <= 1e-9 && self.min_covariance_eigenvalue >= -1e-10
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub experiment: Experiment,
    pub seeds: Vec<u64>,
    pub conditions: Vec<ConditionResult>,
    pub invariants: InvariantReport,
    pub training: Vec<(String, TrainingReport)>,
}

impl ExperimentResult {
    pub fn condition(&self, label: &str) -> Option<&ConditionResult> {
        self.conditions.iter().find(|c| c.label == label)
    }

    pub fn summary(&self, label: &str) -> Option<Summary> {
        self.condition(label).map(ConditionResult::summary)
    }

    /// Per-trial rows, then a `mean` and a `std` row per condition.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        let mut header = vec!["condition", "trial", "seed"];
        header.extend(Summary::COLUMNS);
        out.write_record(&header).map_err(IoError::from)?;
        for c in &self.conditions {
            for (k, (t, seed)) in c.trials.iter().zip(&self.seeds).enumerate() {
                let mut row = vec![c.label.clone(), k.to_string(), seed.to_string()];
                row.extend(row_of(t).map(fmt_real));
                out.write_record(&row).map_err(IoError::from)?;
            }
            let s = c.summary();
            for (tag, vals) in [("mean", s.mean), ("std", s.std)] {
                let mut row = vec![c.label.clone(), tag.to_string(), String::new()];
                row.extend(vals.map(fmt_real));
                out.write_record(&row).map_err(IoError::from)?;
            }
        }
        out.flush().map_err(IoError::from)?;
        Ok(())
    }

    pub fn save_csv(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(IoError::from)?;
        let path = dir.join(format!("{}.csv", self.experiment.name()));
        let file = std::fs::File::create(&path).map_err(IoError::from)?;
        self.write_csv(std::io::BufWriter::new(file))?;
        Ok(path)
    }
}

/// One estimator condition of an experiment.
struct ConditionSpec {
    label: String,
    config: EstimatorConfig,
}

fn threshold_label(t: f64) -> String {
    format!("threshold_{t}")
}

fn training_trial(cfg: &RunConfig, scenario: &ScenarioConfig) -> Result<Trial> {
    generate_trial(scenario, &cfg.noise, cfg.training_seed)
}

fn trained(
    cfg: &RunConfig,
    scenario: &ScenarioConfig,
    label: &str,
    reports: &mut Vec<(String, TrainingReport)>,
) -> Result<ContactModel> {
    let data = training_trial(cfg, scenario)?;
    let (model, report) = train_on_logs(&[&data.sensors], &cfg.training)?;
    reports.push((label.to_string(), report));
    Ok(model)
}

fn evaluate(
    experiment: Experiment,
    cfg: &RunConfig,
    test: &ScenarioConfig,
    conditions: Vec<ConditionSpec>,
    training: Vec<(String, TrainingReport)>,
) -> Result<ExperimentResult> {
    let mut results: Vec<ConditionResult> = conditions
        .iter()
        .map(|c| ConditionResult {
            label: c.label.clone(),
            trials: Vec::with_capacity(cfg.seeds.len()),
        })
        .collect();
    let mut invariants = InvariantReport::default();
    for &seed in &cfg.seeds {
        let trial = generate_trial(test, &cfg.noise, seed)?;
        for (c, out) in conditions.iter().zip(results.iter_mut()) {
            let wrap = |source| ExperimentError::Estimator {
                seed,
                condition: c.label.clone(),
                source,
            };
            let log = run_estimator(&trial.truth.samples[0], &trial.sensors, &c.config).map_err(wrap)?;
            invariants.record(&log);
            out.trials.push(log.rmse(&trial.truth).map_err(wrap)?);
        }
    }
    Ok(ExperimentResult {
        experiment,
        seeds: cfg.seeds.clone(),
        conditions: results,
        invariants,
        training,
    })
}

/// Runs one experiment over `cfg.seeds`.
///
/// * `threshold_sweep`: fixed-threshold estimators at `cfg.thresholds`.
/// * `cluster_vs_fixed`: clustering against the configured threshold.
/// * `train_generalization`: models trained on the configured scenario and
///   on flat ground walking in place, tested on the configured scenario.
/// * `gait_generalization`: models trained on flat turning walks with a
///   fast, a slow and a mixed gait, tested on a mixed-gait walk in place on
///   one rough patch.
/// * `imu_ablation`: clustering with and without the foot IMU features.
pub fn run_experiment(experiment: Experiment, cfg: &RunConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let est = &cfg.estimator;
    let physics = &cfg.scenario.physics;
    let baseline = || ConditionSpec {
        label: threshold_label(est.threshold),
        config: est.fixed_threshold(est.threshold, physics),
    };
    let mut reports = Vec::new();
    let duration = cfg.scenario.gait.duration;
    match experiment {
        Experiment::ThresholdSweep => {
            let conditions = cfg
                .thresholds
                .iter()
                .map(|&t| ConditionSpec {
                    label: threshold_label(t),
                    config: est.fixed_threshold(t, physics),
                })
                .collect();
            evaluate(experiment, cfg, &cfg.scenario, conditions, reports)
        }
        Experiment::ClusterVsFixed => {
            let model = trained(cfg, &cfg.scenario, "clustering", &mut reports)?;
            let conditions = vec![
                ConditionSpec {
                    label: "clustering".into(),
                    config: est.clustering(&model, est.wrench_only, physics),
                },
                baseline(),
            ];
            evaluate(experiment, cfg, &cfg.scenario, conditions, reports)
        }
        Experiment::TrainGeneralization => {
            let rough = trained(cfg, &cfg.scenario, "rough_trained", &mut reports)?;
            let flat_scenario = ScenarioConfig {
                physics: *physics,
                ..ScenarioConfig::flat_walk_in_place().with_duration(duration)
            };
            let flat = trained(cfg, &flat_scenario, "flat_trained", &mut reports)?;
            let conditions = vec![
                ConditionSpec {
                    label: "rough_trained".into(),
                    config: est.clustering(&rough, est.wrench_only, physics),
                },
                ConditionSpec {
                    label: "flat_trained".into(),
                    config: est.clustering(&flat, est.wrench_only, physics),
                },
                baseline(),
            ];
            evaluate(experiment, cfg, &cfg.scenario, conditions, reports)
        }
        Experiment::GaitGeneralization => {
            let turning = ScenarioConfig {
                physics: *physics,
                ..ScenarioConfig::flat_turning_walk().with_duration(duration)
            };
            let mixed_test = ScenarioConfig {
                physics: *physics,
                ..ScenarioConfig::mixed_patch_in_place().with_duration(duration)
            };
            let variants = [
                ("fast_trained", turning.clone().with_timing(crate::scenario::GaitTiming::FAST)),
                ("slow_trained", turning.clone().with_timing(crate::scenario::GaitTiming::SLOW)),
                (
                    "mixed_trained",
                    ScenarioConfig {
                        mixed_segment: mixed_test.mixed_segment,
                        ..turning.clone()
                    },
                ),
            ];
            let mut conditions = Vec::new();
            for (label, scenario) in variants {
                let model = trained(cfg, &scenario, label, &mut reports)?;
                conditions.push(ConditionSpec {
                    label: label.into(),
                    config: est.clustering(&model, est.wrench_only, physics),
                });
            }
            conditions.push(baseline());
            evaluate(experiment, cfg, &mixed_test, conditions, reports)
        }
        Experiment::ImuAblation => {
            let model = trained(cfg, &cfg.scenario, "clustering", &mut reports)?;
            let conditions = vec![
                ConditionSpec {
                    label: "full".into(),
                    config: est.clustering(&model, false, physics),
                },
                ConditionSpec {
                    label: "wrench_only".into(),
                    config: est.clustering(&model, true, physics),
                },
            ];
            evaluate(experiment, cfg, &cfg.scenario, conditions, reports)
        }
    }
}

/// Delay from one slip episode's onset to the first sample at which the
/// slipping DoF's contact probability falls below the threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlipResponse {
    pub episode: SlipEpisode,
    /// `None` when the probability stays at or above the threshold for the
    /// whole search horizon.
    pub delay: Option<f64>,
}

/// Streams each foot's sensors through the model and times the response
/// to every annotated slip, searching up to `horizon` seconds after onset.
pub fn slip_responses(
    model: &ContactModel,
    trial: &Trial,
    contact_threshold: f64,
    horizon: f64,
    wrench_only: bool,
) -> Result<Vec<SlipResponse>> {
    let n = trial.sensors.len();
    let mut prob: [Vec<Option<[f64; 6]>>; 2] = [Vec::with_capacity(n), Vec::with_capacity(n)];
    for side in Side::BOTH {
        let i = side.index();
        let mut est = ContactEstimator::new(model.clone(), wrench_only);
        for k in 0..n {
            let p = est.push(trial.sensors.wrench[i][k], trial.sensors.foot_imu[i][k])?;
            prob[i].push(p.map(|p| p.0));
        }
    }
    let dt = trial.sensors.dt;
    let t0 = trial.sensors.base_imu.first().map_or(0.0, |s| s.time);
    Ok(trial
        .truth
        .episodes
        .iter()
        .map(|e| {
            let i = e.side.index();
            let start = (((e.onset - t0) / dt).round().max(0.0) as usize).min(n);
            let end = ((((e.onset + horizon) - t0) / dt).round().max(0.0) as usize + 1).min(n);
            let delay = (start..end)
                .find(|&k| prob[i][k].is_some_and(|p| p[e.dof.index()] < contact_threshold))
                .map(|k| (t0 + k as f64 * dt - e.onset).max(0.0));
            SlipResponse { episode: *e, delay }
        })
        .collect())
}
