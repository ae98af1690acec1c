//! Per-DoF feature windows: the recent history of the full contact wrench
//! plus the one IMU channel matching the DoF, z-scored and rectified.

use nalgebra::Vector3;
use thiserror::Error;

/// Number of signal blocks in a window: six wrench channels plus one IMU
/// channel.
pub const BLOCKS: usize = 7;
/// Number of wrench blocks at the head of every window.
pub const WRENCH_BLOCKS: usize = 6;
/// Floor applied to per-dimension standard deviations.
pub const MIN_DEVIATION: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("history holds {have} samples, window needs {need}")]
    InsufficientHistory { have: usize, need: usize },
    #[error("unknown DoF {0:?}")]
    UnknownDof(String),
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("need at least two windows to fit statistics, got {0}")]
    TooFewWindows(usize),
    #[error("non-finite value in feature input")]
    NonFinite,
    #[error("wrench and imu histories differ in length ({wrench} vs {imu})")]
    Misaligned { wrench: usize, imu: usize },
    #[error("window length and stride must be positive")]
    InvalidWindow,
}

pub type Result<T> = std::result::Result<T, FeatureError>;

/// Endeffector degree of freedom, in the fixed order `x y z alpha beta gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Dof {
    X,
    Y,
    Z,
    Alpha,
    Beta,
    Gamma,
}

impl Dof {
    pub const ALL: [Dof; 6] = [Dof::X, Dof::Y, Dof::Z, Dof::Alpha, Dof::Beta, Dof::Gamma];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Dof> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Dof::X => "x",
            Dof::Y => "y",
            Dof::Z => "z",
            Dof::Alpha => "alpha",
            Dof::Beta => "beta",
            Dof::Gamma => "gamma",
        }
    }

    /// IMU reading paired with this DoF: accelerometer axes for the
    /// translations, gyro axes for the rotations.
    pub fn imu_channel(self, imu: &ImuSample) -> f64 {
        match self {
            Dof::X => imu.accel.x,
            Dof::Y => imu.accel.y,
            Dof::Z => imu.accel.z,
            Dof::Alpha => imu.gyro.x,
            Dof::Beta => imu.gyro.y,
            Dof::Gamma => imu.gyro.z,
        }
    }
}

impl std::str::FromStr for Dof {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self> {
        Dof::ALL
            .iter()
            .copied()
            .find(|d| d.name() == s)
            .ok_or_else(|| FeatureError::UnknownDof(s.to_string()))
    }
}

impl std::fmt::Display for Dof {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Contact wrench at the endeffector, expressed in the endeffector frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WrenchSample {
    pub time: f64,
    /// Newtons.
    pub force: Vector3<f64>,
    /// Newton-meters.
    pub torque: Vector3<f64>,
}

impl WrenchSample {
    pub fn new(time: f64, force: Vector3<f64>, torque: Vector3<f64>) -> Self {
        Self {
            time,
            force,
            torque,
        }
    }

    pub fn channel(&self, k: usize) -> f64 {
        if k < 3 {
            self.force[k]
        } else {
            self.torque[k - 3]
        }
    }
}

/// Endeffector IMU reading in the sensor frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ImuSample {
    pub time: f64,
    /// Specific force, m/s^2.
    pub accel: Vector3<f64>,
    /// Angular rate, rad/s.
    pub gyro: Vector3<f64>,
}

impl ImuSample {
    pub fn new(time: f64, accel: Vector3<f64>, gyro: Vector3<f64>) -> Self {
        Self { time, accel, gyro }
    }
}

/// Time-aligned sensor history for one endeffector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampleHistory {
    pub wrench: Vec<WrenchSample>,
    pub imu: Vec<ImuSample>,
    /// Seconds between consecutive samples.
    pub sample_period: f64,
}

impl SampleHistory {
    pub fn new(sample_period: f64) -> Self {
        Self {
            wrench: Vec::new(),
            imu: Vec::new(),
            sample_period,
        }
    }

    pub fn len(&self) -> usize {
        self.wrench.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wrench.is_empty()
    }

    pub fn push(&mut self, wrench: WrenchSample, imu: ImuSample) {
        self.wrench.push(wrench);
        self.imu.push(imu);
    }

    pub fn check_aligned(&self) -> Result<()> {
        if self.wrench.len() != self.imu.len() {
            return Err(FeatureError::Misaligned {
                wrench: self.wrench.len(),
                imu: self.imu.len(),
            });
        }
        Ok(())
    }
}

/// Shape of a feature window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    /// Samples per block (`T`).
    pub len: usize,
    /// Spacing between consecutive window samples, in sensor ticks.
    pub stride: usize,
}

impl WindowSpec {
    pub fn new(len: usize, stride: usize) -> Result<Self> {
        if len == 0 || stride == 0 {
            return Err(FeatureError::InvalidWindow);
        }
        Ok(Self { len, stride })
    }

    pub fn dimension(&self) -> usize {
        BLOCKS * self.len
    }

    pub fn wrench_dimension(&self) -> usize {
        WRENCH_BLOCKS * self.len
    }

    /// Samples a history must hold before a window can be built.
    pub fn required_samples(&self) -> usize {
        self.len * self.stride
    }
}

/// Writes the raw window ending at sample `end` (inclusive) into `out`.
///
/// Blocks are `F_x F_y F_z tau_x tau_y tau_z imu(dof)`, each ordered oldest
/// to newest.
pub fn write_window_at(
    wrench: &[WrenchSample],
    imu: &[ImuSample],
    end: usize,
    dof: Dof,
    spec: WindowSpec,
    out: &mut Vec<f64>,
) -> Result<()> {
    let need = spec.required_samples();
    if end + 1 < need || end >= wrench.len() || end >= imu.len() {
        return Err(FeatureError::InsufficientHistory {
            have: (end + 1).min(wrench.len()).min(imu.len()),
            need,
        });
    }
    let t = spec.len;
    out.clear();
    out.resize(BLOCKS * t, 0.0);
    for j in 0..t {
        let idx = end - (t - 1 - j) * spec.stride;
        let w = &wrench[idx];
        for k in 0..WRENCH_BLOCKS {
            out[k * t + j] = w.channel(k);
        }
        out[WRENCH_BLOCKS * t + j] = dof.imu_channel(&imu[idx]);
    }
    Ok(())
}

/// Raw window built from the most recent samples of `history`.
pub fn build_window(history: &SampleHistory, dof: Dof, spec: WindowSpec) -> Result<Vec<f64>> {
    history.check_aligned()?;
    if history.is_empty() {
        return Err(FeatureError::InsufficientHistory {
            have: 0,
            need: spec.required_samples(),
        });
    }
    let mut out = Vec::with_capacity(spec.dimension());
    write_window_at(
        &history.wrench,
        &history.imu,
        history.len() - 1,
        dof,
        spec,
        &mut out,
    )?;
    Ok(out)
}

/// Per-dimension z-score statistics learned from training windows.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std_dev: Vec<f64>,
}

impl NormalizationStats {
    pub fn dimension(&self) -> usize {
        self.mean.len()
    }

    /// Statistics restricted to the first `dim` dimensions.
    pub fn truncated(&self, dim: usize) -> NormalizationStats {
        NormalizationStats {
            mean: self.mean[..dim].to_vec(),
            std_dev: self.std_dev[..dim].to_vec(),
        }
    }

    /// Maps a preprocessed (non-negative) value back to raw units, assuming
    /// the positive side of the mean.
    pub fn denormalize(&self, k: usize, value: f64) -> f64 {
        self.mean[k] + self.std_dev[k] * value
    }
}

/// Population mean and deviation per dimension, deviations floored at
/// [`MIN_DEVIATION`].
pub fn fit_stats<P: AsRef<[f64]>>(windows: &[P]) -> Result<NormalizationStats> {
    if windows.len() < 2 {
        return Err(FeatureError::TooFewWindows(windows.len()));
    }
    let dim = windows[0].as_ref().len();
    let n = windows.len() as f64;
    let mut mean = vec![0.0; dim];
    for w in windows {
        let w = w.as_ref();
        if w.len() != dim {
            return Err(FeatureError::DimensionMismatch {
                expected: dim,
                found: w.len(),
            });
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(FeatureError::NonFinite);
        }
        for (m, v) in mean.iter_mut().zip(w) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for w in windows {
        for ((s, v), m) in var.iter_mut().zip(w.as_ref()).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std_dev = var
        .into_iter()
        .map(|s| (s / n).sqrt().max(MIN_DEVIATION))
        .collect();
    Ok(NormalizationStats { mean, std_dev })
}

/// `|raw - mean| / deviation`, elementwise.
pub fn preprocess(raw: &[f64], stats: &NormalizationStats) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(raw.len());
    preprocess_into(raw, stats, &mut out)?;
    Ok(out)
}

pub fn preprocess_into(raw: &[f64], stats: &NormalizationStats, out: &mut Vec<f64>) -> Result<()> {
    if raw.len() != stats.dimension() {
        return Err(FeatureError::DimensionMismatch {
            expected: stats.dimension(),
            found: raw.len(),
        });
    }
    out.clear();
    for ((v, m), s) in raw.iter().zip(&stats.mean).zip(&stats.std_dev) {
        if !v.is_finite() {
            return Err(FeatureError::NonFinite);
        }
        out.push(((v - m) / s).abs());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp_history(n: usize) -> SampleHistory {
        let mut h = SampleHistory::new(0.001);
        for i in 0..n {
            let t = i as f64;
            h.push(
                WrenchSample::new(
                    t * 1e-3,
                    Vector3::new(t, 100.0 + t, 200.0 + t),
                    Vector3::new(300.0 + t, 400.0 + t, 500.0 + t),
                ),
                ImuSample::new(
                    t * 1e-3,
                    Vector3::new(-t, -100.0 - t, -200.0 - t),
                    Vector3::new(-300.0 - t, -400.0 - t, -500.0 - t),
                ),
            );
        }
        h
    }

    #[test]
    fn window_length_is_seven_blocks() {
        let h = ramp_history(30);
        let spec = WindowSpec::new(20, 1).unwrap();
        let w = build_window(&h, Dof::X, spec).unwrap();
        assert_eq!(w.len(), 140);
    }

    #[test]
    fn blocks_follow_channel_order() {
        let h = ramp_history(25);
        let spec = WindowSpec::new(20, 1).unwrap();
        let w = build_window(&h, Dof::Y, spec).unwrap();
        // Oldest sample in the window is index 5, newest 24.
        assert_eq!(w[0], 5.0);
        assert_eq!(w[19], 24.0);
        assert_eq!(w[20], 105.0);
        assert_eq!(w[2 * 20], 205.0);
        assert_eq!(w[5 * 20 + 19], 524.0);
        // Seventh block is a_y.
        assert_eq!(w[6 * 20], -105.0);
        assert_eq!(w[6 * 20 + 19], -124.0);
        let g = build_window(&h, Dof::Gamma, spec).unwrap();
        assert_eq!(g[6 * 20 + 19], -524.0);
    }

    #[test]
    fn strided_window_skips_samples() {
        let h = ramp_history(40);
        let spec = WindowSpec::new(5, 3).unwrap();
        let w = build_window(&h, Dof::X, spec).unwrap();
        assert_eq!(&w[..5], &[27.0, 30.0, 33.0, 36.0, 39.0]);
    }

    #[test]
    fn constant_history_gives_constant_window() {
        let mut h = SampleHistory::new(0.001);
        for _ in 0..20 {
            h.push(
                WrenchSample::new(0.0, Vector3::repeat(1.0), Vector3::repeat(1.0)),
                ImuSample::new(0.0, Vector3::repeat(1.0), Vector3::repeat(1.0)),
            );
        }
        let w = build_window(&h, Dof::Z, WindowSpec::new(20, 1).unwrap()).unwrap();
        assert!(w.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn short_history_is_rejected() {
        let h = ramp_history(19);
        assert!(matches!(
            build_window(&h, Dof::X, WindowSpec::new(20, 1).unwrap()),
            Err(FeatureError::InsufficientHistory { have: 19, need: 20 })
        ));
    }

    #[test]
    fn unknown_dof_name() {
        assert!("delta".parse::<Dof>().is_err());
        assert_eq!("beta".parse::<Dof>().unwrap(), Dof::Beta);
    }

    #[test]
    fn two_point_statistics() {
        let s = fit_stats(&[vec![0.0, 5.0], vec![2.0, 5.0]]).unwrap();
        assert_eq!(s.mean, vec![1.0, 5.0]);
        assert_eq!(s.std_dev, vec![1.0, MIN_DEVIATION]);
    }

    #[test]
    fn stats_need_two_windows() {
        assert_eq!(
            fit_stats::<Vec<f64>>(&[]),
            Err(FeatureError::TooFewWindows(0))
        );
    }

    #[test]
    fn preprocess_at_mean_is_zero() {
        let s = NormalizationStats {
            mean: vec![1.0, -2.0, 3.0],
            std_dev: vec![0.5, 2.0, 1.0],
        };
        assert_eq!(preprocess(&[1.0, -2.0, 3.0], &s).unwrap(), vec![0.0; 3]);
        assert_eq!(preprocess(&[0.5, -4.0, 2.0], &s).unwrap(), vec![1.0; 3]);
        assert!(preprocess(&[1.0], &s).is_err());
        assert_eq!(
            preprocess(&[f64::NAN, 0.0, 0.0], &s),
            Err(FeatureError::NonFinite)
        );
    }

    proptest! {
        #[test]
        fn preprocess_folds_sign(
            mean in prop::collection::vec(-100.0..100.0f64, 8),
            dev in prop::collection::vec(0.01..10.0f64, 8),
            d in prop::collection::vec(-50.0..50.0f64, 8),
        ) {
            let stats = NormalizationStats { mean: mean.clone(), std_dev: dev };
            let plus: Vec<f64> = mean.iter().zip(&d).map(|(m, d)| m + d).collect();
            let minus: Vec<f64> = mean.iter().zip(&d).map(|(m, d)| m - d).collect();
            let a = preprocess(&plus, &stats).unwrap();
            let b = preprocess(&minus, &stats).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
                prop_assert!(*x >= 0.0);
            }
        }

        #[test]
        fn unit_stats_are_absolute_value(raw in prop::collection::vec(-1e3..1e3f64, 1..30)) {
            let stats = NormalizationStats { mean: vec![0.0; raw.len()], std_dev: vec![1.0; raw.len()] };
            let out = preprocess(&raw, &stats).unwrap();
            for (o, r) in out.iter().zip(&raw) {
                prop_assert_eq!(*o, r.abs());
            }
        }
    }
}
