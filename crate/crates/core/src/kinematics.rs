//! Closed-form 6-DoF leg kinematics (hip yaw-roll-pitch, knee pitch, ankle
//! pitch-roll) and the small SO(3) helpers shared by the simulator and the
//! estimator.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("foot target out of reach: hip-to-ankle distance {distance:.4} m outside [{min:.4}, {max:.4}]")]
    Unreachable { distance: f64, min: f64, max: f64 },
    #[error("non-finite joint angle or pose")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    pub fn index(self) -> usize {
        match self {
            Side::Left => 0,
            Side::Right => 1,
        }
    }

    /// +1 for the left leg, -1 for the right (base y axis points left).
    pub fn sign(self) -> f64 {
        match self {
            Side::Left => 1.0,
            Side::Right => -1.0,
        }
    }

    pub fn other(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

/// Joint order: hip yaw, hip roll, hip pitch, knee, ankle pitch, ankle roll.
pub type JointAngles = [f64; 6];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegGeometry {
    /// Lateral distance from the base origin to each hip joint (m).
    pub hip_offset: f64,
    pub thigh: f64,
    pub shank: f64,
}

impl Default for LegGeometry {
    fn default() -> Self {
        Self {
            hip_offset: 0.1,
            thigh: 0.35,
            shank: 0.35,
        }
    }
}

impl LegGeometry {
    pub fn hip(&self, side: Side) -> Vector3<f64> {
        Vector3::new(0.0, side.sign() * self.hip_offset, 0.0)
    }

    /// Ankle pose in the base frame.
    pub fn forward(&self, side: Side, q: &JointAngles) -> (Vector3<f64>, Rotation3<f64>) {
        let r_hip = rot_z(q[0]) * rot_x(q[1]) * rot_y(q[2]);
        let knee = self.hip(side) + r_hip * Vector3::new(0.0, 0.0, -self.thigh);
        let r_knee = r_hip * rot_y(q[3]);
        let ankle = knee + r_knee * Vector3::new(0.0, 0.0, -self.shank);
        let r_foot = r_knee * rot_y(q[4]) * rot_x(q[5]);
        (ankle, r_foot)
    }

    /// Joint angles placing the ankle at `(p, r)` in the base frame, knee
    /// bent forward.
    pub fn inverse(
        &self,
        side: Side,
        p: &Vector3<f64>,
        r: &Rotation3<f64>,
    ) -> Result<JointAngles, KinematicsError> {
        let (a, b) = (self.thigh, self.shank);
        // Hip position seen from the ankle frame.
        let h = r.inverse() * (self.hip(side) - p);
        let c = h.norm();
        let (min, max) = ((a - b).abs() + 1e-9, a + b - 1e-9);
        if !(c.is_finite()) {
            return Err(KinematicsError::NonFinite);
        }
        if c < min || c > max {
            return Err(KinematicsError::Unreachable {
                distance: c,
                min,
                max,
            });
        }
        let c_knee = (c * c - a * a - b * b) / (2.0 * a * b);
        let knee = c_knee.clamp(-1.0, 1.0).acos();
        let ankle_offset = ((b * b + c * c - a * a) / (2.0 * b * c)).clamp(-1.0, 1.0).acos();
        let ankle_roll = h.y.atan2(h.z);
        let ankle_pitch = -h.x.atan2(h.z.signum() * (h.y * h.y + h.z * h.z).sqrt()) - ankle_offset;
        let rh = *r.matrix() * rot_x(-ankle_roll).matrix() * rot_y(-ankle_pitch - knee).matrix();
        let hip_yaw = (-rh[(0, 1)]).atan2(rh[(1, 1)]);
        let (sz, cz) = hip_yaw.sin_cos();
        let hip_roll = rh[(2, 1)].atan2(-rh[(0, 1)] * sz + rh[(1, 1)] * cz);
        let hip_pitch = (-rh[(2, 0)]).atan2(rh[(2, 2)]);
        let q = [hip_yaw, hip_roll, hip_pitch, knee, ankle_pitch, ankle_roll];
        if q.iter().any(|v| !v.is_finite()) {
            return Err(KinematicsError::NonFinite);
        }
        Ok(q)
    }
}

pub fn rot_x(a: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::x_axis(), a)
}

pub fn rot_y(a: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::y_axis(), a)
}

pub fn rot_z(a: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::z_axis(), a)
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation vector to rotation.
pub fn exp_so3(v: &Vector3<f64>) -> Rotation3<f64> {
    Rotation3::new(*v)
}

/// Rotation to rotation vector, angle in [0, pi].
pub fn log_so3(r: &Rotation3<f64>) -> Vector3<f64> {
    // The matrix path of `scaled_axis` loses precision (and can yield NaN)
    // near the identity; the quaternion path stays accurate.
    UnitQuaternion::from_rotation_matrix(r).scaled_axis()
}

/// True iff `m` is orthonormal with determinant +1 within `tol`.
pub fn is_rotation(m: &Matrix3<f64>, tol: f64) -> bool {
    let err = (m.transpose() * m - Matrix3::identity()).abs().max();
    err <= tol && (m.determinant() - 1.0).abs() <= tol && m.iter().all(|v| v.is_finite())
}

/// Heading of a rotation: yaw of its x axis projected onto the ground plane.
pub fn yaw_of(r: &Rotation3<f64>) -> f64 {
    let x = r * Vector3::x();
    x.y.atan2(x.x)
}

pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let w = (a + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI;
    if w <= -std::f64::consts::PI {
        w + two_pi
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close_pose(
        a: &(Vector3<f64>, Rotation3<f64>),
        p: &Vector3<f64>,
        r: &Rotation3<f64>,
        tol: f64,
    ) -> bool {
        (a.0 - p).norm() < tol && log_so3(&(a.1.inverse() * r)).norm() < tol
    }

    #[test]
    fn straight_leg_points_down() {
        let geo = LegGeometry::default();
        let (p, r) = geo.forward(Side::Left, &[0.0; 6]);
        assert!((p - Vector3::new(0.0, 0.1, -0.7)).norm() < 1e-15);
        assert_eq!(r, Rotation3::identity());
    }

    #[test]
    fn nominal_stance_round_trip() {
        let geo = LegGeometry::default();
        for side in Side::BOTH {
            let p = Vector3::new(0.05, side.sign() * 0.12, -0.6);
            let r = rot_z(0.2) * rot_y(-0.1);
            let q = geo.inverse(side, &p, &r).unwrap();
            assert!(q[3] > 0.0, "knee must bend forward");
            assert!(close_pose(&geo.forward(side, &q), &p, &r, 1e-10));
        }
    }

    #[test]
    fn unreachable_target_is_reported() {
        let geo = LegGeometry::default();
        let err = geo
            .inverse(Side::Right, &Vector3::new(0.0, -0.1, -0.9), &Rotation3::identity())
            .unwrap_err();
        assert!(matches!(err, KinematicsError::Unreachable { .. }));
    }

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12);
        assert!((wrap_angle(-0.5) + 0.5).abs() < 1e-15);
        assert!((wrap_angle(7.0) - (7.0 - std::f64::consts::TAU)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn inverse_then_forward_is_identity(
            x in -0.2f64..0.2, y in -0.1f64..0.1, z in -0.66f64..-0.45,
            yaw in -0.6f64..0.6, pitch in -0.3f64..0.3, roll in -0.2f64..0.2,
            left in any::<bool>(),
        ) {
            let geo = LegGeometry::default();
            let side = if left { Side::Left } else { Side::Right };
            let p = Vector3::new(x, side.sign() * 0.1 + y, z);
            let r = rot_z(yaw) * rot_y(pitch) * rot_x(roll);
            let q = geo.inverse(side, &p, &r).unwrap();
            prop_assert!(close_pose(&geo.forward(side, &q), &p, &r, 1e-9));
        }

        #[test]
        fn exp_log_round_trip(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
            let v = Vector3::new(x, y, z);
            prop_assert!((log_so3(&exp_so3(&v)) - v).norm() < 1e-12);
        }
    }
}
