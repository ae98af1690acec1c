//! Sensor corruption: additive white noise plus random-walk biases on wrench
//! and IMU channels, and white noise on joint angles.
//!
//! All deviations are discrete values at the 1 kHz sample rate. Bias walk
//! rates are per second: each step adds a draw with deviation `sigma_b * dt`.
//! Users holding continuous-time densities `s` (units per sqrt(s)) convert
//! with `sigma_b = s / sqrt(dt)`.
//!
//! Every channel owns an independent ChaCha8 stream derived from one seed,
//! so disabling or re-tuning one channel never shifts another's draws.

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{ImuSample, SampleHistory, WrenchSample};
use crate::kinematics::{is_rotation, JointAngles, Side};
use crate::scenario::GroundTruthLog;

/// Gravity added in the world frame before rotating into the sensor frame.
pub const GRAVITY: Vector3<f64> = Vector3::new(0.0, 0.0, 9.81);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensorError {
    #[error("sensor rotation is not orthonormal")]
    NotARotation,
    #[error("noise deviation `{0}` must be finite and nonnegative")]
    InvalidDeviation(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub joint_angle: f64,
    pub force: f64,
    pub force_bias: f64,
    pub torque: f64,
    pub torque_bias: f64,
    pub accel: f64,
    pub accel_bias: f64,
    pub gyro: f64,
    pub gyro_bias: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            joint_angle: 1e-4,
            force: 2.0,
            force_bias: 0.00316,
            torque: 0.1,
            torque_bias: 0.00316,
            accel: 0.02467,
            accel_bias: 0.00316,
            gyro: 0.01653,
            gyro_bias: 0.01954,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        Self {
            joint_angle: 0.0,
            force: 0.0,
            force_bias: 0.0,
            torque: 0.0,
            torque_bias: 0.0,
            accel: 0.0,
            accel_bias: 0.0,
            gyro: 0.0,
            gyro_bias: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), SensorError> {
        let fields = [
            ("joint_angle", self.joint_angle),
            ("force", self.force),
            ("force_bias", self.force_bias),
            ("torque", self.torque),
            ("torque_bias", self.torque_bias),
            ("accel", self.accel),
            ("accel_bias", self.accel_bias),
            ("gyro", self.gyro),
            ("gyro_bias", self.gyro_bias),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SensorError::InvalidDeviation(name));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BiasState {
    pub force: Vector3<f64>,
    pub torque: Vector3<f64>,
    pub accel: Vector3<f64>,
    pub gyro: Vector3<f64>,
}

/// Noise channels, each with its own generator stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Force = 0,
    Torque,
    Accel,
    Gyro,
    ForceBias,
    TorqueBias,
    AccelBias,
    GyroBias,
    Joints,
}

const CHANNELS: usize = 9;

/// Independent generator streams for one physical sensor unit.
#[derive(Debug, Clone)]
pub struct NoiseStreams {
    rngs: Vec<ChaCha8Rng>,
}

impl NoiseStreams {
    /// Streams for sensor unit `unit` (e.g. base, left foot, right foot).
    pub fn new(seed: u64, unit: u64) -> Self {
        let rngs = (0..CHANNELS as u64)
            .map(|c| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(unit * CHANNELS as u64 + c);
                rng
            })
            .collect();
        Self { rngs }
    }

    pub fn normal(&mut self, channel: Channel) -> f64 {
        StandardNormal.sample(&mut self.rngs[channel as usize])
    }

    fn vector(&mut self, channel: Channel, sigma: f64) -> Vector3<f64> {
        if sigma == 0.0 {
            return Vector3::zeros();
        }
        let rng = &mut self.rngs[channel as usize];
        Vector3::from_fn(|_, _| {
            let z: f64 = StandardNormal.sample(rng);
            sigma * z
        })
    }
}

/// One random-walk step of every bias.
pub fn step_bias(bias: &BiasState, spec: &NoiseSpec, dt: f64, rng: &mut NoiseStreams) -> BiasState {
    BiasState {
        force: bias.force + rng.vector(Channel::ForceBias, spec.force_bias * dt),
        torque: bias.torque + rng.vector(Channel::TorqueBias, spec.torque_bias * dt),
        accel: bias.accel + rng.vector(Channel::AccelBias, spec.accel_bias * dt),
        gyro: bias.gyro + rng.vector(Channel::GyroBias, spec.gyro_bias * dt),
    }
}

pub fn corrupt_wrench(
    truth: &WrenchSample,
    bias: &BiasState,
    spec: &NoiseSpec,
    rng: &mut NoiseStreams,
) -> WrenchSample {
    WrenchSample {
        time: truth.time,
        force: truth.force + bias.force + rng.vector(Channel::Force, spec.force),
        torque: truth.torque + bias.torque + rng.vector(Channel::Torque, spec.torque),
    }
}

/// Accelerometer `R (a + g) + b_a + w_a`, gyro `R omega + b_w + w_w`, where
/// `r_sensor_world` maps world vectors into the sensor frame.
pub fn corrupt_imu(
    time: f64,
    accel_world: &Vector3<f64>,
    omega_world: &Vector3<f64>,
    r_sensor_world: &Matrix3<f64>,
    bias: &BiasState,
    spec: &NoiseSpec,
    rng: &mut NoiseStreams,
) -> Result<ImuSample, SensorError> {
    if !is_rotation(r_sensor_world, 1e-9) {
        return Err(SensorError::NotARotation);
    }
    Ok(ImuSample {
        time,
        accel: r_sensor_world * (accel_world + GRAVITY)
            + bias.accel
            + rng.vector(Channel::Accel, spec.accel),
        gyro: r_sensor_world * omega_world + bias.gyro + rng.vector(Channel::Gyro, spec.gyro),
    })
}

pub fn corrupt_joints(q: &JointAngles, spec: &NoiseSpec, rng: &mut NoiseStreams) -> JointAngles {
    let mut out = *q;
    if spec.joint_angle > 0.0 {
        for v in &mut out {
            *v += spec.joint_angle * rng.normal(Channel::Joints);
        }
    }
    out
}

/// Corrupted sensor streams for one run, aligned tick by tick with the
/// ground-truth log they were generated from.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorLog {
    pub dt: f64,
    pub base_imu: Vec<ImuSample>,
    /// Per foot (left, right): wrench in the foot frame, foot IMU, joints.
    pub wrench: [Vec<WrenchSample>; 2],
    pub foot_imu: [Vec<ImuSample>; 2],
    pub joints: [Vec<JointAngles>; 2],
}

impl SensorLog {
    pub fn len(&self) -> usize {
        self.base_imu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base_imu.is_empty()
    }

    /// Wrench and IMU history of one foot, as used for training.
    pub fn history(&self, side: Side) -> SampleHistory {
        let i = side.index();
        SampleHistory {
            wrench: self.wrench[i].clone(),
            imu: self.foot_imu[i].clone(),
            sample_period: self.dt,
        }
    }
}

/// Sensor unit numbers; each unit gets its own set of streams.
pub const BASE_UNIT: u64 = 0;

pub fn foot_unit(side: Side) -> u64 {
    1 + side.index() as u64
}

/// Corrupts every channel of a ground-truth log. Biases start at zero and
/// walk once per tick before that tick's sample is corrupted.
pub fn corrupt_log(truth: &GroundTruthLog, spec: &NoiseSpec) -> Result<SensorLog, SensorError> {
    spec.validate()?;
    let n = truth.len();
    let dt = truth.dt;
    let mut base_rng = NoiseStreams::new(spec.seed, BASE_UNIT);
    let mut foot_rng = Side::BOTH.map(|s| NoiseStreams::new(spec.seed, foot_unit(s)));
    let mut base_bias = BiasState::default();
    let mut foot_bias = [BiasState::default(); 2];
    let mut out = SensorLog {
        dt,
        base_imu: Vec::with_capacity(n),
        wrench: [Vec::with_capacity(n), Vec::with_capacity(n)],
        foot_imu: [Vec::with_capacity(n), Vec::with_capacity(n)],
        joints: [Vec::with_capacity(n), Vec::with_capacity(n)],
    };
    for s in &truth.samples {
        base_bias = step_bias(&base_bias, spec, dt, &mut base_rng);
        let b = &s.base;
        let r_bw = b.pose.rotation().inverse();
        out.base_imu.push(corrupt_imu(
            s.time,
            &b.acceleration,
            &b.angular_velocity,
            r_bw.matrix(),
            &base_bias,
            spec,
            &mut base_rng,
        )?);
        for side in Side::BOTH {
            let i = side.index();
            let f = &s.feet[i];
            let rng = &mut foot_rng[i];
            foot_bias[i] = step_bias(&foot_bias[i], spec, dt, rng);
            let mut w = corrupt_wrench(&f.wrench, &foot_bias[i], spec, rng);
            w.time = s.time;
            out.wrench[i].push(w);
            let r_fw = f.body.pose.rotation().inverse();
            out.foot_imu[i].push(corrupt_imu(
                s.time,
                &f.body.acceleration,
                &f.body.angular_velocity,
                r_fw.matrix(),
                &foot_bias[i],
                spec,
                rng,
            )?);
            out.joints[i].push(corrupt_joints(&f.joints, spec, rng));
        }
    }
    Ok(out)
}
