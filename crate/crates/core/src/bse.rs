//! Kinematic base state estimator: an error-state Kalman filter propagating
//! the base with its IMU and correcting it with per-foot relative poses from
//! leg kinematics.
//!
//! Nominal state: base position `r`, velocity `v`, orientation `q`, per foot
//! position `p_i` and orientation `z_i`, and base IMU biases. The 27-DoF
//! error state is ordered
//!
//! ```text
//! [dr, dv, dtheta, dp_L, dphi_L, dp_R, dphi_R, db_a, db_w]
//! ```
//!
//! with rotational errors on the right (`R = R_hat Exp(dtheta)`), i.e. in the
//! body frame of the base or foot. A foot measurement is the foot pose in the
//! base frame: `s_p = R^T (p_i - r)` and `R_BF = R^T Z_i`.

use nalgebra::{Matrix3, Matrix6, SMatrix, SVector, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contact::{in_contact, ContactError, ContactEstimator, ContactModel, ContactProbability};
use crate::features::Dof;
use crate::kinematics::{is_rotation, log_so3, skew, wrap_angle, yaw_of, LegGeometry, Side};
use crate::scenario::{GroundTruthLog, TruthSample};
use crate::sensors::{SensorLog, GRAVITY};

pub const ERROR_DIM: usize = 27;
const R: usize = 0;
const V: usize = 3;
const TH: usize = 6;
const BA: usize = 21;
const BW: usize = 24;

fn foot_pos(side: Side) -> usize {
    9 + 6 * side.index()
}

fn foot_rot(side: Side) -> usize {
    12 + 6 * side.index()
}

pub type Covariance = SMatrix<f64, ERROR_DIM, ERROR_DIM>;
type ErrorVector = SVector<f64, ERROR_DIM>;

#[derive(Debug, Error)]
pub enum BseError {
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty series")]
    Empty,
    #[error("contact probability outside [0, 1]")]
    InvalidProbability,
    #[error("rotation is not orthonormal")]
    NotARotation,
    #[error("innovation covariance is not positive definite")]
    SingularInnovation,
    #[error("invalid noise parameter `{0}`")]
    InvalidNoise(&'static str),
    #[error(transparent)]
    Contact(#[from] ContactError),
}

pub type Result<T> = std::result::Result<T, BseError>;

/// Nominal measurement deviation and the scale of the probability term.
/// `r_rot` overrides `r` on the orientation rows when set. The probability
/// term is added as-is to rows in m^2 and rad^2 alike.
///
/// The default `r` of 0.3 mm is about three times the forward-kinematics
/// error the default joint-angle noise produces over the leg. With `alpha`
/// of one, any probability short of certainty quickly dominates `r^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasurementNoise {
    pub r: f64,
    pub r_rot: Option<f64>,
    pub alpha: f64,
}

impl Default for MeasurementNoise {
    fn default() -> Self {
        Self {
            r: 3e-4,
            r_rot: None,
            alpha: 1.0,
        }
    }
}

impl MeasurementNoise {
    pub fn validate(&self) -> Result<()> {
        if !(self.r.is_finite() && self.r > 0.0) {
            return Err(BseError::InvalidNoise("r"));
        }
        if let Some(r) = self.r_rot {
            if !(r.is_finite() && r > 0.0) {
                return Err(BseError::InvalidNoise("r_rot"));
            }
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(BseError::InvalidNoise("alpha"));
        }
        Ok(())
    }
}

/// Process noise as discrete per-sample deviations, matching the sensor
/// model: IMU white noise per sample and bias walk rates per second. Foot
/// poses random-walk slowly while measured and fast while unmeasured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProcessNoise {
    pub accel: f64,
    pub gyro: f64,
    pub accel_bias: f64,
    pub gyro_bias: f64,
    /// Foot random-walk densities (m/sqrt(s), rad/sqrt(s)).
    pub foot_position: f64,
    pub foot_rotation: f64,
    pub free_foot_position: f64,
    pub free_foot_rotation: f64,
}

impl Default for ProcessNoise {
    fn default() -> Self {
        Self {
            accel: 0.02467,
            gyro: 0.01653,
            accel_bias: 0.00316,
            gyro_bias: 0.01954,
            foot_position: 1e-4,
            foot_rotation: 2e-4,
            free_foot_position: 1.0,
            free_foot_rotation: 1.0,
        }
    }
}

impl ProcessNoise {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("accel", self.accel),
            ("gyro", self.gyro),
            ("accel_bias", self.accel_bias),
            ("gyro_bias", self.gyro_bias),
            ("foot_position", self.foot_position),
            ("foot_rotation", self.foot_rotation),
            ("free_foot_position", self.free_foot_position),
            ("free_foot_rotation", self.free_foot_rotation),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(BseError::InvalidNoise(name));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FootState {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
    /// False until the foot is measured, and again whenever it is gated out;
    /// an untracked foot is re-anchored at its next measurement.
    pub tracked: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaseState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
    pub accel_bias: Vector3<f64>,
    pub gyro_bias: Vector3<f64>,
    pub feet: [FootState; 2],
    pub covariance: Covariance,
}

/// Foot pose relative to the base, from forward kinematics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FootMeasurement {
    pub position: Vector3<f64>,
    pub rotation: Matrix3<f64>,
}

impl BaseState {
    /// State initialized to a ground-truth sample with small uniform
    /// uncertainty.
    pub fn from_truth(sample: &TruthSample, initial_std: f64) -> Self {
        let foot = |i: usize| FootState {
            position: sample.feet[i].body.pose.position,
            orientation: sample.feet[i].body.pose.orientation,
            tracked: true,
        };
        Self {
            position: sample.base.pose.position,
            velocity: sample.base.velocity,
            orientation: sample.base.pose.orientation,
            accel_bias: Vector3::zeros(),
            gyro_bias: Vector3::zeros(),
            feet: [foot(0), foot(1)],
            covariance: Covariance::identity() * initial_std.powi(2),
        }
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        *self.orientation.to_rotation_matrix().matrix()
    }

    pub fn yaw(&self) -> f64 {
        yaw_of(&self.orientation.to_rotation_matrix())
    }

    /// Predicted measurement of one foot.
    pub fn expected_measurement(&self, side: Side) -> FootMeasurement {
        let rt = self.rotation().transpose();
        let f = &self.feet[side.index()];
        FootMeasurement {
            position: rt * (f.position - self.position),
            rotation: rt * f.orientation.to_rotation_matrix().matrix(),
        }
    }

    /// Moves an untracked foot's nominal pose onto a measurement.
    pub fn anchor_foot(&mut self, side: Side, meas: &FootMeasurement) {
        let r = self.rotation();
        let f = &mut self.feet[side.index()];
        f.position = self.position + r * meas.position;
        f.orientation = UnitQuaternion::from_matrix(&(r * meas.rotation));
        f.tracked = true;
    }

    /// Largest deviation of any quaternion norm from one.
    pub fn quaternion_norm_error(&self) -> f64 {
        let mut e = (self.orientation.as_ref().norm() - 1.0).abs();
        for f in &self.feet {
            e = e.max((f.orientation.as_ref().norm() - 1.0).abs());
        }
        e
    }

    pub fn min_covariance_eigenvalue(&self) -> f64 {
        self.covariance
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

fn renormalize(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::new_normalize(q.into_inner())
}

fn symmetrize(p: &mut Covariance) {
    *p = (*p + p.transpose()) * 0.5;
}

/// Strapdown propagation over one sample with error-state covariance
/// propagation. Untracked feet get the fast random-walk noise.
pub fn predict(
    state: &mut BaseState,
    accel: &Vector3<f64>,
    gyro: &Vector3<f64>,
    dt: f64,
    noise: &ProcessNoise,
) -> Result<()> {
    if !(accel.iter().chain(gyro.iter()).all(|v| v.is_finite())) {
        return Err(BseError::NonFinite("IMU sample"));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(BseError::NonFinite("time step"));
    }
    let rot = state.rotation();
    let a = accel - state.accel_bias;
    let w = gyro - state.gyro_bias;
    let a_world = rot * a - GRAVITY;

    state.velocity += a_world * dt;
    state.position += state.velocity * dt;
    let dq = UnitQuaternion::from_scaled_axis(w * dt);
    state.orientation = renormalize(state.orientation * dq);

    // Only the r, v and theta rows of the transition differ from identity.
    let mut g = SMatrix::<f64, 9, ERROR_DIM>::zeros();
    let ra = -rot * skew(&a);
    let i3 = Matrix3::identity();
    g.fixed_view_mut::<3, 3>(0, R).copy_from(&i3);
    g.fixed_view_mut::<3, 3>(0, V).copy_from(&(i3 * dt));
    g.fixed_view_mut::<3, 3>(0, TH).copy_from(&(ra * dt * dt));
    g.fixed_view_mut::<3, 3>(0, BA).copy_from(&(-rot * dt * dt));
    g.fixed_view_mut::<3, 3>(3, V).copy_from(&i3);
    g.fixed_view_mut::<3, 3>(3, TH).copy_from(&(ra * dt));
    g.fixed_view_mut::<3, 3>(3, BA).copy_from(&(-rot * dt));
    g.fixed_view_mut::<3, 3>(6, TH).copy_from(&dq.to_rotation_matrix().matrix().transpose());
    g.fixed_view_mut::<3, 3>(6, BW).copy_from(&(-i3 * dt));

    let p = &mut state.covariance;
    let m = g * *p;
    let maa = m * g.transpose();
    let mar = m.columns(9, ERROR_DIM - 9).into_owned();
    p.fixed_view_mut::<9, 9>(0, 0).copy_from(&maa);
    p.view_mut((0, 9), (9, ERROR_DIM - 9)).copy_from(&mar);
    p.view_mut((9, 0), (ERROR_DIM - 9, 9)).copy_from(&mar.transpose());

    let qa = (noise.accel * dt).powi(2);
    for k in 0..3 {
        p[(R + k, R + k)] += qa * dt * dt;
        p[(R + k, V + k)] += qa * dt;
        p[(V + k, R + k)] += qa * dt;
        p[(V + k, V + k)] += qa;
        p[(TH + k, TH + k)] += (noise.gyro * dt).powi(2);
        p[(BA + k, BA + k)] += (noise.accel_bias * dt).powi(2);
        p[(BW + k, BW + k)] += (noise.gyro_bias * dt).powi(2);
    }
    for side in Side::BOTH {
        let (qp, qr) = if state.feet[side.index()].tracked {
            (noise.foot_position, noise.foot_rotation)
        } else {
            (noise.free_foot_position, noise.free_foot_rotation)
        };
        for k in 0..3 {
            p[(foot_pos(side) + k, foot_pos(side) + k)] += qp * qp * dt;
            p[(foot_rot(side) + k, foot_rot(side) + k)] += qr * qr * dt;
        }
    }
    symmetrize(p);
    Ok(())
}

/// Probability-modulated measurement covariance in the endeffector frame:
/// `r^2 I + alpha (I - diag(p))`, rows ordered `(x, y, z, alpha, beta, gamma)`.
pub fn modulate_covariance(p: &ContactProbability, noise: &MeasurementNoise) -> Result<Matrix6<f64>> {
    if p.validate().is_err() {
        return Err(BseError::InvalidProbability);
    }
    let r_rot = noise.r_rot.unwrap_or(noise.r);
    let mut sigma = Matrix6::zeros();
    for dof in Dof::ALL {
        let i = dof.index();
        let r = if i < 3 { noise.r } else { r_rot };
        sigma[(i, i)] = r * r + noise.alpha * (1.0 - p.0[i]);
    }
    Ok(sigma)
}

/// Rotates an endeffector-frame covariance into the base frame with
/// `blockdiag(R, R)`, where `R` maps endeffector vectors to base vectors.
pub fn transform_covariance(sigma: &Matrix6<f64>, rotation: &Matrix3<f64>) -> Result<Matrix6<f64>> {
    if !is_rotation(rotation, 1e-9) {
        return Err(BseError::NotARotation);
    }
    let mut b = Matrix6::zeros();
    b.fixed_view_mut::<3, 3>(0, 0).copy_from(rotation);
    b.fixed_view_mut::<3, 3>(3, 3).copy_from(rotation);
    let out = b * sigma * b.transpose();
    Ok((out + out.transpose()) * 0.5)
}

/// Measurement Jacobian of one foot's relative pose.
pub fn measurement_jacobian(state: &BaseState, side: Side) -> SMatrix<f64, 6, ERROR_DIM> {
    let rt = state.rotation().transpose();
    let exp = state.expected_measurement(side);
    let mut h = SMatrix::<f64, 6, ERROR_DIM>::zeros();
    h.fixed_view_mut::<3, 3>(0, R).copy_from(&(-rt));
    h.fixed_view_mut::<3, 3>(0, TH).copy_from(&skew(&exp.position));
    h.fixed_view_mut::<3, 3>(0, foot_pos(side)).copy_from(&rt);
    h.fixed_view_mut::<3, 3>(3, TH).copy_from(&(-Matrix3::identity()));
    h.fixed_view_mut::<3, 3>(3, foot_rot(side)).copy_from(&exp.rotation);
    h
}

/// Innovation `(s_p - s_p_hat, Log(R_BF R_BF_hat^T))`.
pub fn innovation(state: &BaseState, side: Side, meas: &FootMeasurement) -> Vector6<f64> {
    let exp = state.expected_measurement(side);
    let dp = meas.position - exp.position;
    let dr = log_so3(&nalgebra::Rotation3::from_matrix_unchecked(
        meas.rotation * exp.rotation.transpose(),
    ));
    Vector6::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z)
}

fn inject(state: &mut BaseState, dx: &ErrorVector) {
    state.position += dx.fixed_rows::<3>(R);
    state.velocity += dx.fixed_rows::<3>(V);
    let dth: Vector3<f64> = dx.fixed_rows::<3>(TH).into();
    state.orientation = renormalize(state.orientation * UnitQuaternion::from_scaled_axis(dth));
    for side in Side::BOTH {
        let f = &mut state.feet[side.index()];
        f.position += dx.fixed_rows::<3>(foot_pos(side));
        let dphi: Vector3<f64> = dx.fixed_rows::<3>(foot_rot(side)).into();
        f.orientation = renormalize(f.orientation * UnitQuaternion::from_scaled_axis(dphi));
    }
    state.accel_bias += dx.fixed_rows::<3>(BA);
    state.gyro_bias += dx.fixed_rows::<3>(BW);
}

/// Kalman update with one foot's relative pose and base-frame measurement
/// covariance `sigma`. A closed gate leaves the state untouched.
pub fn update_foot(
    state: &mut BaseState,
    side: Side,
    meas: &FootMeasurement,
    sigma: &Matrix6<f64>,
    gate: bool,
) -> Result<()> {
    if !gate {
        return Ok(());
    }
    if !(meas.position.iter().chain(meas.rotation.iter()).all(|v| v.is_finite())) {
        return Err(BseError::NonFinite("foot measurement"));
    }
    let h = measurement_jacobian(state, side);
    let y = innovation(state, side, meas);
    let p = &state.covariance;
    let pht = p * h.transpose();
    let s = h * pht + sigma;
    let s = (s + s.transpose()) * 0.5;
    let chol = s.cholesky().ok_or(BseError::SingularInnovation)?;
    let k = chol.solve(&pht.transpose()).transpose();
    let dx = k * y;
    state.covariance = p - k * s * k.transpose();
    symmetrize(&mut state.covariance);
    inject(state, &dx);
    Ok(())
}

/// Baseline contact rule: strictly above the threshold.
pub fn fixed_threshold_contact(fz: f64, threshold: f64) -> bool {
    fz > threshold
}

/// Per-dimension root-mean-squared difference of two aligned series.
pub fn rmse<const D: usize>(estimate: &[[f64; D]], truth: &[[f64; D]]) -> Result<[f64; D]> {
    if estimate.len() != truth.len() {
        return Err(BseError::LengthMismatch(estimate.len(), truth.len()));
    }
    if estimate.is_empty() {
        return Err(BseError::Empty);
    }
    let mut acc = [0.0; D];
    for (e, t) in estimate.iter().zip(truth) {
        for d in 0..D {
            acc[d] += (e[d] - t[d]).powi(2);
        }
    }
    let n = estimate.len() as f64;
    Ok(acc.map(|s| (s / n).sqrt()))
}

/// How measurements are gated and weighted.
#[derive(Debug, Clone)]
pub enum Gating {
    /// Contact probability from the clustering model; gate when every DoF
    /// exceeds `contact_threshold`, covariance modulated by the probability.
    Clustering {
        model: ContactModel,
        wrench_only: bool,
        contact_threshold: f64,
    },
    /// Gate when measured F_z exceeds the threshold; constant covariance.
    Threshold(f64),
    /// Externally supplied gate per sample and foot (e.g. from ground
    /// truth); constant covariance.
    Given(Vec<[bool; 2]>),
}

#[derive(Debug, Clone)]
pub struct EstimatorConfig {
    pub gating: Gating,
    pub measurement: MeasurementNoise,
    pub process: ProcessNoise,
    pub initial_std: f64,
    pub leg: LegGeometry,
    /// Covariance eigenvalues are checked every this many samples.
    pub psd_check_interval: usize,
}

impl EstimatorConfig {
    pub fn new(gating: Gating) -> Self {
        Self {
            gating,
            measurement: MeasurementNoise::default(),
            process: ProcessNoise::default(),
            initial_std: 1e-3,
            leg: LegGeometry::default(),
            psd_check_interval: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateSample {
    pub time: f64,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
    pub probability: [Option<ContactProbability>; 2],
    pub gate: [bool; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateLog {
    pub samples: Vec<EstimateSample>,
    pub max_quaternion_norm_error: f64,
    pub min_covariance_eigenvalue: f64,
    pub max_asymmetry: f64,
}

/// Base position and yaw RMSE of one run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrackingRmse {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
}

impl TrackingRmse {
    /// Euclidean position RMSE, `sqrt(x^2 + y^2 + z^2)`.
    pub fn position(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x, self.y, self.z, self.yaw]
    }
}

impl EstimateLog {
    /// Errors in base x, y, z and yaw against the truth log.
    pub fn errors(&self, truth: &GroundTruthLog) -> Result<Vec<[f64; 4]>> {
        if self.samples.len() != truth.len() {
            return Err(BseError::LengthMismatch(self.samples.len(), truth.len()));
        }
        Ok(self
            .samples
            .iter()
            .zip(&truth.samples)
            .map(|(e, t)| {
                let d = e.position - t.base.pose.position;
                let yaw_e = yaw_of(&e.orientation.to_rotation_matrix());
                let yaw_t = yaw_of(&t.base.pose.rotation());
                [d.x, d.y, d.z, wrap_angle(yaw_e - yaw_t)]
            })
            .collect())
    }

    pub fn rmse(&self, truth: &GroundTruthLog) -> Result<TrackingRmse> {
        let err = self.errors(truth)?;
        let zero = vec![[0.0; 4]; err.len()];
        let [x, y, z, yaw] = rmse(&err, &zero)?;
        Ok(TrackingRmse { x, y, z, yaw })
    }
}

/// Foot measurements from noisy joint angles.
pub fn measure_foot(leg: &LegGeometry, side: Side, q: &crate::kinematics::JointAngles) -> FootMeasurement {
    let (p, r) = leg.forward(side, q);
    FootMeasurement {
        position: p,
        rotation: *r.matrix(),
    }
}

/// Runs the estimator over a sensor log, starting from the first truth
/// sample. At each tick the feet are updated, the estimate recorded, then
/// the base IMU sample propagates the state to the next tick.
pub fn run_estimator(
    initial: &TruthSample,
    sensors: &SensorLog,
    cfg: &EstimatorConfig,
) -> Result<EstimateLog> {
    cfg.measurement.validate()?;
    cfg.process.validate()?;
    if sensors.is_empty() {
        return Err(BseError::Empty);
    }
    let mut state = BaseState::from_truth(initial, cfg.initial_std);
    for f in state.feet.iter_mut() {
        f.tracked = false;
    }
    let mut contact = match &cfg.gating {
        Gating::Clustering {
            model, wrench_only, ..
        } => Some([
            ContactEstimator::new(model.clone(), *wrench_only),
            ContactEstimator::new(model.clone(), *wrench_only),
        ]),
        Gating::Threshold(_) | Gating::Given(_) => None,
    };
    let constant_sigma = modulate_covariance(&ContactProbability::CERTAIN, &cfg.measurement)?;
    let mut out = EstimateLog {
        samples: Vec::with_capacity(sensors.len()),
        max_quaternion_norm_error: 0.0,
        min_covariance_eigenvalue: f64::INFINITY,
        max_asymmetry: 0.0,
    };
    for k in 0..sensors.len() {
        let mut probability = [None, None];
        let mut gate = [false; 2];
        for side in Side::BOTH {
            let i = side.index();
            let w = sensors.wrench[i][k];
            let meas = measure_foot(&cfg.leg, side, &sensors.joints[i][k]);
            let sigma_ee = match (&cfg.gating, contact.as_mut()) {
                (Gating::Clustering { contact_threshold, .. }, Some(est)) => {
                    let p = est[i].push(w, sensors.foot_imu[i][k])?;
                    probability[i] = p;
                    gate[i] = p.is_some_and(|p| in_contact(&p, *contact_threshold));
                    modulate_covariance(&p.unwrap_or(ContactProbability::NONE), &cfg.measurement)?
                }
                (Gating::Threshold(thr), _) => {
                    gate[i] = fixed_threshold_contact(w.force.z, *thr);
                    constant_sigma
                }
                (Gating::Given(g), _) => {
                    gate[i] = g.get(k).is_some_and(|g| g[i]);
                    constant_sigma
                }
                _ => unreachable!("clustering gating always has estimators"),
            };
            if !gate[i] {
                state.feet[i].tracked = false;
                continue;
            }
            if !state.feet[i].tracked {
                state.anchor_foot(side, &meas);
            }
            let sigma = transform_covariance(&sigma_ee, &meas.rotation)?;
            update_foot(&mut state, side, &meas, &sigma, true)?;
        }
        out.samples.push(EstimateSample {
            time: sensors.base_imu[k].time,
            position: state.position,
            velocity: state.velocity,
            orientation: state.orientation,
            probability,
            gate,
        });
        out.max_quaternion_norm_error = out.max_quaternion_norm_error.max(state.quaternion_norm_error());
        if cfg.psd_check_interval > 0 && k % cfg.psd_check_interval == 0 {
            let p = &state.covariance;
            out.max_asymmetry = out.max_asymmetry.max((p - p.transpose()).amax());
            out.min_covariance_eigenvalue = out.min_covariance_eigenvalue.min(state.min_covariance_eigenvalue());
        }
        let imu = &sensors.base_imu[k];
        predict(&mut state, &imu.accel, &imu.gyro, sensors.dt, &cfg.process)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::rot_z;

    fn still_state() -> BaseState {
        BaseState {
            position: Vector3::new(0.0, 0.0, 0.6),
            velocity: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
            accel_bias: Vector3::zeros(),
            gyro_bias: Vector3::zeros(),
            feet: [FootState {
                position: Vector3::new(0.0, 0.1, 0.0),
                orientation: UnitQuaternion::identity(),
                tracked: true,
            }; 2],
            covariance: Covariance::identity() * 1e-4,
        }
    }

    #[test]
    fn stationary_prediction_does_not_drift() {
        let mut s = still_state();
        for _ in 0..1000 {
            predict(&mut s, &GRAVITY, &Vector3::zeros(), 1e-3, &ProcessNoise::default()).unwrap();
        }
        assert!((s.position - Vector3::new(0.0, 0.0, 0.6)).norm() < 1e-6);
    }

    #[test]
    fn constant_yaw_rate_integrates_exactly() {
        let mut s = still_state();
        let n = 3142;
        let dt = std::f64::consts::PI / n as f64;
        for _ in 0..n {
            predict(&mut s, &GRAVITY, &Vector3::new(0.0, 0.0, 1.0), dt, &ProcessNoise::default()).unwrap();
        }
        let yaw = s.orientation.angle_to(&UnitQuaternion::from_euler_angles(0.0, 0.0, std::f64::consts::PI));
        assert!(yaw < 1e-6, "{yaw}");
    }

    #[test]
    fn prediction_grows_trace() {
        let mut s = still_state();
        let before = s.covariance.trace();
        predict(&mut s, &GRAVITY, &Vector3::zeros(), 1e-3, &ProcessNoise::default()).unwrap();
        assert!(s.covariance.trace() > before);
    }

    #[test]
    fn modulation_examples() {
        let n = MeasurementNoise {
            r: 0.01,
            ..Default::default()
        };
        assert_eq!(
            modulate_covariance(&ContactProbability::CERTAIN, &n).unwrap(),
            Matrix6::identity() * 1e-4
        );
        let n0 = MeasurementNoise {
            r: 0.0,
            ..Default::default()
        };
        assert_eq!(modulate_covariance(&ContactProbability::NONE, &n0).unwrap(), Matrix6::identity());
        let n1 = MeasurementNoise {
            r: 0.1,
            ..Default::default()
        };
        let s = modulate_covariance(&ContactProbability([1.0, 1.0, 1.0, 0.5, 1.0, 1.0]), &n1).unwrap();
        let want = [0.01, 0.01, 0.01, 0.51, 0.01, 0.01];
        for i in 0..6 {
            assert!((s[(i, i)] - want[i]).abs() <= 1e-15);
        }
        assert!(modulate_covariance(&ContactProbability([1.5, 1.0, 1.0, 1.0, 1.0, 1.0]), &n1).is_err());
    }

    #[test]
    fn transform_permutes_axes() {
        let s = Matrix6::from_diagonal(&Vector6::new(1.0, 2.0, 3.0, 1.0, 2.0, 3.0));
        let r = *rot_z(std::f64::consts::FRAC_PI_2).matrix();
        let t = transform_covariance(&s, &r).unwrap();
        let want = Matrix6::from_diagonal(&Vector6::new(2.0, 1.0, 3.0, 2.0, 1.0, 3.0));
        assert!((t - want).amax() < 1e-12);
        assert_eq!(transform_covariance(&s, &Matrix3::identity()).unwrap(), s);
        assert!(transform_covariance(&s, &(Matrix3::identity() * 2.0)).is_err());
    }

    #[test]
    fn closed_gate_is_identity() {
        let mut s = still_state();
        let before = s.clone();
        let m = FootMeasurement {
            position: Vector3::new(1.0, 2.0, 3.0),
            rotation: Matrix3::identity(),
        };
        update_foot(&mut s, Side::Left, &m, &(Matrix6::identity() * 1e-6), false).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn update_contracts_foot_uncertainty() {
        let mut s = still_state();
        let m = s.expected_measurement(Side::Left);
        let rel = |s: &BaseState| {
            let h = measurement_jacobian(s, Side::Left).fixed_rows::<3>(0).into_owned();
            (h * s.covariance * h.transpose()).trace()
        };
        let before = rel(&s);
        update_foot(&mut s, Side::Left, &m, &(Matrix6::identity() * 1e-8), true).unwrap();
        assert!(rel(&s) * 10.0 <= before);
    }

    #[test]
    fn threshold_is_strict() {
        assert!(fixed_threshold_contact(250.0, 200.0));
        assert!(!fixed_threshold_contact(200.0, 200.0));
    }

    #[test]
    fn rmse_basics() {
        let a = vec![[1.0, 2.0]; 10];
        assert_eq!(rmse(&a, &a).unwrap(), [0.0, 0.0]);
        let b = vec![[1.5, 2.0]; 10];
        assert_eq!(rmse(&a, &b).unwrap(), [0.5, 0.0]);
        assert!(rmse(&a, &b[..3]).is_err());
    }
}
