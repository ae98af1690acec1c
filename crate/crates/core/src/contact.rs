//! Six independent two-cluster models, one per endeffector DoF, and the
//! runtime estimator that turns sensor history into contact probabilities.
//!
//! # Model file
//!
//! Plain text, one record per line, tokens separated by single spaces.
//! Real numbers are written with 17 significant digits so a save/load
//! round trip is exact.
//!
//! ```text
//! fuzzy-contact-model 1
//! window_len <T>
//! stride <stride>
//! fuzziness <m>
//! dofs x y z alpha beta gamma
//! dimension <7T>
//! # then, for each dof in the order above:
//! dof <name>
//! contact_cluster <0|1>
//! cluster_fz <fz0> <fz1>
//! iterations <n>
//! final_cost <cost>
//! stats_mean <7T values>
//! stats_std <7T values>
//! mean0 <7T values>
//! mean1 <7T values>
//! end
//! ```

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::fcm::{self, FcmConfig, FcmError, FcmModel};
use crate::features::{
    self, Dof, FeatureError, ImuSample, NormalizationStats, SampleHistory, WindowSpec,
    WrenchSample, WRENCH_BLOCKS,
};

pub const MODEL_MAGIC: &str = "fuzzy-contact-model";
pub const MODEL_VERSION: u32 = 1;

/// Default probability every DoF must exceed for the foot to count as in
/// contact.
pub const DEFAULT_CONTACT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum ContactError {
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Fcm(#[from] FcmError),
    #[error("training data yields {have} windows for dof {dof}, need at least {need}")]
    InsufficientData { dof: Dof, have: usize, need: usize },
    #[error("no cluster carries load for dof {dof} (cluster F_z levels {fz0:.3} N, {fz1:.3} N)")]
    NoLoadedCluster { dof: Dof, fz0: f64, fz1: f64 },
    #[error("model file i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("model file line {line}: {msg}")]
    Schema { line: usize, msg: String },
    #[error("probability entry {0} outside [0, 1]")]
    InvalidProbability(f64),
}

pub type Result<T> = std::result::Result<T, ContactError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingConfig {
    pub fcm: FcmConfig,
    pub window: WindowSpec,
    /// Ticks between the end points of consecutive training windows.
    pub hop: usize,
    /// Minimum number of windows required per DoF.
    pub min_windows: usize,
    /// The loaded cluster must average at least this normal force (N).
    pub min_contact_force: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            fcm: FcmConfig::default(),
            window: WindowSpec { len: 20, stride: 1 },
            hop: 10,
            min_windows: 100,
            min_contact_force: 20.0,
        }
    }
}

/// One DoF's clustering problem.
#[derive(Debug, Clone, PartialEq)]
pub struct DofModel {
    pub dof: Dof,
    pub fcm: FcmModel,
    pub stats: NormalizationStats,
    pub contact_cluster: usize,
    /// Raw-unit F_z level of each cluster (N): the membership-weighted
    /// centroid of the training windows' F_z block, averaged over the block.
    pub cluster_fz: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContactModel {
    pub window: WindowSpec,
    pub fuzziness: f64,
    /// Indexed by [`Dof::index`].
    pub dofs: Vec<DofModel>,
}

/// Per-DoF contact probabilities, ordered `x y z alpha beta gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactProbability(pub [f64; 6]);

impl ContactProbability {
    pub const CERTAIN: ContactProbability = ContactProbability([1.0; 6]);
    pub const NONE: ContactProbability = ContactProbability([0.0; 6]);

    pub fn get(&self, dof: Dof) -> f64 {
        self.0[dof.index()]
    }

    pub fn validate(&self) -> Result<()> {
        match self.0.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            Some(&p) => Err(ContactError::InvalidProbability(p)),
            None => Ok(()),
        }
    }
}

/// True iff every entry strictly exceeds `threshold`.
pub fn in_contact(p: &ContactProbability, threshold: f64) -> bool {
    p.0.iter().all(|&v| v > threshold)
}

/// Index of the cluster carrying the larger F_z level; ties go to 0.
pub fn label_contact_cluster(model: &DofModel) -> usize {
    label_by_fz(model.cluster_fz)
}

fn label_by_fz(fz: [f64; 2]) -> usize {
    if fz[1] > fz[0] {
        1
    } else {
        0
    }
}

/// Diagnostics from [`train`], one entry per DoF.
#[derive(Debug, Clone, Default)]
pub struct TrainingReport {
    pub windows_per_dof: usize,
    pub dofs: Vec<DofTrainingReport>,
}

#[derive(Debug, Clone)]
pub struct DofTrainingReport {
    pub dof: Dof,
    pub iterations: usize,
    pub final_cost: f64,
    pub converged: bool,
    pub rescued_clusters: usize,
    pub cost_monotone: bool,
    pub max_weight_sum_error: f64,
}

fn training_windows(
    logs: &[SampleHistory],
    dof: Dof,
    cfg: &TrainingConfig,
) -> Result<Vec<Vec<f64>>> {
    let need = cfg.window.required_samples();
    let hop = cfg.hop.max(1);
    let mut out = Vec::new();
    for log in logs {
        log.check_aligned()?;
        if log.len() < need {
            continue;
        }
        let mut end = need - 1;
        while end < log.len() {
            let mut w = Vec::with_capacity(cfg.window.dimension());
            features::write_window_at(&log.wrench, &log.imu, end, dof, cfg.window, &mut w)?;
            out.push(w);
            end += hop;
        }
    }
    Ok(out)
}

/// Fits the six per-DoF clustering problems on logged sensor data.
pub fn train(logs: &[SampleHistory], cfg: &TrainingConfig) -> Result<(ContactModel, TrainingReport)> {
    cfg.fcm.validate()?;
    let t = cfg.window.len;
    let fz_block = 2 * t..3 * t;
    let mut dofs = Vec::with_capacity(6);
    let mut report = TrainingReport::default();
    for dof in Dof::ALL {
        let raw = training_windows(logs, dof, cfg)?;
        if raw.len() < cfg.min_windows.max(2) {
            return Err(ContactError::InsufficientData {
                dof,
                have: raw.len(),
                need: cfg.min_windows.max(2),
            });
        }
        let stats = features::fit_stats(&raw)?;
        let points: Vec<Vec<f64>> = raw
            .iter()
            .map(|w| features::preprocess(w, &stats))
            .collect::<std::result::Result<_, _>>()?;
        let fcm_cfg = FcmConfig {
            num_clusters: 2,
            rng_seed: cfg.fcm.rng_seed.wrapping_add(dof.index() as u64),
            ..cfg.fcm
        };
        let (model, diag) = fcm::fit_with_diagnostics(&points, &fcm_cfg)?;

        let mut fz = [0.0; 2];
        let mut mass = [0.0; 2];
        for (w, x) in diag.weights.iter().zip(&raw) {
            let level = x[fz_block.clone()].iter().sum::<f64>() / t as f64;
            for j in 0..2 {
                let wm = w[j].powf(fcm_cfg.fuzziness);
                fz[j] += wm * level;
                mass[j] += wm;
            }
        }
        for j in 0..2 {
            fz[j] = if mass[j] > 0.0 { fz[j] / mass[j] } else { 0.0 };
        }
        if fz[0].max(fz[1]) < cfg.min_contact_force {
            return Err(ContactError::NoLoadedCluster {
                dof,
                fz0: fz[0],
                fz1: fz[1],
            });
        }
        report.windows_per_dof = raw.len();
        report.dofs.push(DofTrainingReport {
            dof,
            iterations: model.iterations_used,
            final_cost: model.final_cost,
            converged: diag.converged,
            rescued_clusters: diag.rescued_clusters,
            cost_monotone: diag.cost_is_monotone(1e-12),
            max_weight_sum_error: diag.max_weight_sum_error,
        });
        dofs.push(DofModel {
            dof,
            contact_cluster: label_by_fz(fz),
            fcm: model,
            stats,
            cluster_fz: fz,
        });
    }
    Ok((
        ContactModel {
            window: cfg.window,
            fuzziness: cfg.fcm.fuzziness,
            dofs,
        },
        report,
    ))
}

impl ContactModel {
    pub fn dof(&self, dof: Dof) -> &DofModel {
        &self.dofs[dof.index()]
    }

    pub fn dimension(&self) -> usize {
        self.window.dimension()
    }

    /// Checks the structural invariants a loaded or hand-built model must
    /// satisfy.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.dofs.len() != 6 {
            return Err(format!("expected 6 dof models, found {}", self.dofs.len()));
        }
        if !(self.fuzziness > 1.0) {
            return Err("fuzziness must exceed 1".into());
        }
        let dim = self.dimension();
        for (i, d) in self.dofs.iter().enumerate() {
            if d.dof.index() != i {
                return Err(format!("dof {} stored at position {i}", d.dof));
            }
            if d.fcm.means.len() != 2 {
                return Err(format!("dof {} has {} means", d.dof, d.fcm.means.len()));
            }
            if d.contact_cluster > 1 {
                return Err(format!("dof {} contact cluster {}", d.dof, d.contact_cluster));
            }
            if d.stats.mean.len() != dim
                || d.stats.std_dev.len() != dim
                || d.fcm.means.iter().any(|m| m.len() != dim)
                || d.fcm.dimension != dim
            {
                return Err(format!("dof {} has inconsistent dimensions", d.dof));
            }
        }
        Ok(())
    }
}

/// Contact probability from the most recent samples in `history`.
pub fn estimate_probability(model: &ContactModel, history: &SampleHistory) -> Result<ContactProbability> {
    let mut est = ContactEstimator::new(model.clone(), false);
    est.evaluate_history(history)
}

/// As [`estimate_probability`] but using only the wrench blocks of the
/// window and of the stored means and statistics.
pub fn estimate_probability_wrench_only(
    model: &ContactModel,
    history: &SampleHistory,
) -> Result<ContactProbability> {
    let mut est = ContactEstimator::new(model.clone(), true);
    est.evaluate_history(history)
}

struct PreparedDof {
    stats: NormalizationStats,
    means: Vec<Vec<f64>>,
    contact_cluster: usize,
}

/// Streaming estimator for one endeffector: keeps the last `T * stride`
/// samples and emits one probability vector per tick once the buffer fills.
pub struct ContactEstimator {
    window: WindowSpec,
    fuzziness: f64,
    wrench_only: bool,
    dofs: Vec<PreparedDof>,
    wrench: VecDeque<WrenchSample>,
    imu: VecDeque<ImuSample>,
    raw: Vec<f64>,
    scaled: Vec<f64>,
}

impl ContactEstimator {
    pub fn new(model: ContactModel, wrench_only: bool) -> Self {
        let dim = if wrench_only {
            model.window.wrench_dimension()
        } else {
            model.window.dimension()
        };
        let dofs = model
            .dofs
            .into_iter()
            .map(|d| PreparedDof {
                stats: d.stats.truncated(dim),
                means: d.fcm.means.iter().map(|m| m[..dim].to_vec()).collect(),
                contact_cluster: d.contact_cluster,
            })
            .collect();
        let cap = model.window.required_samples();
        Self {
            window: model.window,
            fuzziness: model.fuzziness,
            wrench_only,
            dofs,
            wrench: VecDeque::with_capacity(cap),
            imu: VecDeque::with_capacity(cap),
            raw: Vec::with_capacity(dim),
            scaled: Vec::with_capacity(dim),
        }
    }

    pub fn is_wrench_only(&self) -> bool {
        self.wrench_only
    }

    pub fn reset(&mut self) {
        self.wrench.clear();
        self.imu.clear();
    }

    /// Appends one tick; returns the probability once enough history exists.
    pub fn push(&mut self, wrench: WrenchSample, imu: ImuSample) -> Result<Option<ContactProbability>> {
        let cap = self.window.required_samples();
        if self.wrench.len() == cap {
            self.wrench.pop_front();
            self.imu.pop_front();
        }
        self.wrench.push_back(wrench);
        self.imu.push_back(imu);
        if self.wrench.len() < cap {
            return Ok(None);
        }
        self.evaluate_buffer().map(Some)
    }

    fn evaluate_history(&mut self, history: &SampleHistory) -> Result<ContactProbability> {
        history.check_aligned()?;
        let need = self.window.required_samples();
        if history.len() < need {
            return Err(FeatureError::InsufficientHistory {
                have: history.len(),
                need,
            }
            .into());
        }
        self.reset();
        let start = history.len() - need;
        self.wrench.extend(&history.wrench[start..]);
        self.imu.extend(&history.imu[start..]);
        self.evaluate_buffer()
    }

    fn fill_raw(&mut self, dof: Dof) {
        let t = self.window.len;
        let s = self.window.stride;
        let n = self.wrench.len();
        let blocks = if self.wrench_only {
            WRENCH_BLOCKS
        } else {
            WRENCH_BLOCKS + 1
        };
        self.raw.clear();
        self.raw.resize(blocks * t, 0.0);
        for j in 0..t {
            let idx = n - 1 - (t - 1 - j) * s;
            let w = &self.wrench[idx];
            for k in 0..WRENCH_BLOCKS {
                self.raw[k * t + j] = w.channel(k);
            }
            if !self.wrench_only {
                self.raw[WRENCH_BLOCKS * t + j] = dof.imu_channel(&self.imu[idx]);
            }
        }
    }

    fn evaluate_buffer(&mut self) -> Result<ContactProbability> {
        let mut p = [0.0; 6];
        for dof in Dof::ALL {
            self.fill_raw(dof);
            let prepared = &self.dofs[dof.index()];
            features::preprocess_into(&self.raw, &prepared.stats, &mut self.scaled)?;
            let w = fcm::membership(&self.scaled, &prepared.means, self.fuzziness)?;
            p[dof.index()] = w[prepared.contact_cluster].clamp(0.0, 1.0);
        }
        Ok(ContactProbability(p))
    }
}

fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn push_reals(out: &mut String, key: &str, values: &[f64]) {
    out.push_str(key);
    for v in values {
        out.push(' ');
        out.push_str(&fmt_real(*v));
    }
    out.push('\n');
}

/// Serializes a model in the versioned text format described in the module
/// docs.
pub fn model_to_string(model: &ContactModel) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{MODEL_MAGIC} {MODEL_VERSION}");
    let _ = writeln!(s, "window_len {}", model.window.len);
    let _ = writeln!(s, "stride {}", model.window.stride);
    let _ = writeln!(s, "fuzziness {}", fmt_real(model.fuzziness));
    let names: Vec<&str> = Dof::ALL.iter().map(|d| d.name()).collect();
    let _ = writeln!(s, "dofs {}", names.join(" "));
    let _ = writeln!(s, "dimension {}", model.dimension());
    for d in &model.dofs {
        let _ = writeln!(s, "dof {}", d.dof);
        let _ = writeln!(s, "contact_cluster {}", d.contact_cluster);
        push_reals(&mut s, "cluster_fz", &d.cluster_fz);
        let _ = writeln!(s, "iterations {}", d.fcm.iterations_used);
        let _ = writeln!(s, "final_cost {}", fmt_real(d.fcm.final_cost));
        push_reals(&mut s, "stats_mean", &d.stats.mean);
        push_reals(&mut s, "stats_std", &d.stats.std_dev);
        push_reals(&mut s, "mean0", &d.fcm.means[0]);
        push_reals(&mut s, "mean1", &d.fcm.means[1]);
    }
    s.push_str("end\n");
    s
}

struct LineReader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> LineReader<'a> {
    fn schema(&self, msg: impl Into<String>) -> ContactError {
        ContactError::Schema {
            line: self.line,
            msg: msg.into(),
        }
    }

    /// Next line, which must start with `key`; returns the remaining tokens.
    fn expect(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let Some((i, line)) = self.lines.next() else {
            self.line += 1;
            return Err(self.schema(format!("unexpected end of file, expected `{key}`")));
        };
        self.line = i + 1;
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some(k) if k == key => Ok(tokens.collect()),
            other => Err(self.schema(format!("expected `{key}`, found `{}`", other.unwrap_or("")))),
        }
    }

    fn single<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let toks = self.expect(key)?;
        if toks.len() != 1 {
            return Err(self.schema(format!("`{key}` takes one value")));
        }
        toks[0]
            .parse()
            .map_err(|_| self.schema(format!("bad value `{}` for `{key}`", toks[0])))
    }

    fn reals(&mut self, key: &str, count: usize) -> Result<Vec<f64>> {
        let toks = self.expect(key)?;
        if toks.len() != count {
            return Err(self.schema(format!(
                "`{key}` has {} values, expected {count}",
                toks.len()
            )));
        }
        toks.iter()
            .map(|t| {
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| self.schema(format!("bad real `{t}` in `{key}`")))
            })
            .collect()
    }
}

pub fn model_from_str(text: &str) -> Result<ContactModel> {
    let mut r = LineReader {
        lines: text.lines().enumerate(),
        line: 0,
    };
    let header = r.expect(MODEL_MAGIC)?;
    match header.as_slice() {
        [v] if v.parse::<u32>().ok() == Some(MODEL_VERSION) => {}
        _ => return Err(r.schema(format!("unsupported model version {header:?}"))),
    }
    let len: usize = r.single("window_len")?;
    let stride: usize = r.single("stride")?;
    let window = WindowSpec::new(len, stride).map_err(|e| r.schema(e.to_string()))?;
    let fuzziness: f64 = r.single("fuzziness")?;
    let order = r.expect("dofs")?;
    let expected: Vec<&str> = Dof::ALL.iter().map(|d| d.name()).collect();
    if order != expected {
        return Err(r.schema(format!("unsupported dof order {order:?}")));
    }
    let dim: usize = r.single("dimension")?;
    if dim != window.dimension() {
        return Err(r.schema(format!(
            "dimension {dim} inconsistent with window length {len}"
        )));
    }
    let mut dofs = Vec::with_capacity(6);
    for dof in Dof::ALL {
        let name: String = r.single("dof")?;
        if name != dof.name() {
            return Err(r.schema(format!("expected dof `{dof}`, found `{name}`")));
        }
        let contact_cluster: usize = r.single("contact_cluster")?;
        if contact_cluster > 1 {
            return Err(r.schema("contact_cluster must be 0 or 1"));
        }
        let fz = r.reals("cluster_fz", 2)?;
        let iterations_used: usize = r.single("iterations")?;
        let final_cost: f64 = r.single("final_cost")?;
        let mean = r.reals("stats_mean", dim)?;
        let std_dev = r.reals("stats_std", dim)?;
        let m0 = r.reals("mean0", dim)?;
        let m1 = r.reals("mean1", dim)?;
        dofs.push(DofModel {
            dof,
            fcm: FcmModel {
                means: vec![m0, m1],
                dimension: dim,
                final_cost,
                iterations_used,
            },
            stats: NormalizationStats { mean, std_dev },
            contact_cluster,
            cluster_fz: [fz[0], fz[1]],
        });
    }
    r.expect("end")?;
    let model = ContactModel {
        window,
        fuzziness,
        dofs,
    };
    model.validate().map_err(|m| r.schema(m))?;
    Ok(model)
}

pub fn save_model(model: &ContactModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, model_to_string(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ContactModel> {
    let text = std::fs::read_to_string(path)?;
    model_from_str(&text)
}
