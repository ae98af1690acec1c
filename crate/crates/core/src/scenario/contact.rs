//! Penalty contact and the stick/slip state machines of a stance foot.
//!
//! The normal force follows a spring-damper law on a virtual penetration
//! state. Tangential force, yaw torque and centre of pressure are whatever
//! the leg demands while the demand lies inside the corresponding
//! constraint; outside it the ground supplies only the boundary value and
//! the foot moves (slides, spins, or tips about the support edge).

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::terrain::SurfaceSpec;
use crate::features::WrenchSample;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltyConfig {
    /// Contact stiffness (N/m).
    pub k_p: f64,
    /// Contact damping (N s/m).
    pub k_d: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self { k_p: 1e5, k_d: 1e3 }
    }
}

/// Foot motion relative to the ground, in the foot frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SlipMotion {
    pub velocity: Vector2<f64>,
    pub yaw_rate: f64,
}

/// Wrench the leg asks the ground for, in the foot frame. The normal force
/// is not part of the demand; it comes from the penalty law.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Demand {
    pub tangential: Vector2<f64>,
    pub torque: Vector3<f64>,
}

/// Emitted contact wrench for the given penetration state, demand and
/// relative motion. Moving contacts get kinetic friction opposing the
/// motion; static contacts get the demand clamped to each constraint.
pub fn contact_wrench(
    penetration: f64,
    penetration_rate: f64,
    demand: &Demand,
    motion: &SlipMotion,
    surface: &SurfaceSpec,
    penalty: &PenaltyConfig,
) -> WrenchSample {
    let fz = if penetration > 0.0 {
        (penalty.k_p * penetration + penalty.k_d * penetration_rate).max(0.0)
    } else {
        0.0
    };
    let t_max = surface.mu_xy * fz;
    let speed = motion.velocity.norm();
    let ft = if speed > 0.0 {
        -motion.velocity * (t_max / speed)
    } else {
        let d = demand.tangential.norm();
        if d > t_max {
            demand.tangential * (t_max / d)
        } else {
            demand.tangential
        }
    };
    let z_max = surface.mu_z * fz;
    let tz = if motion.yaw_rate != 0.0 {
        -motion.yaw_rate.signum() * z_max
    } else {
        demand.torque.z.clamp(-z_max, z_max)
    };
    let tx = demand.torque.x.clamp(-surface.cop_y * fz, surface.cop_y * fz);
    let ty = demand.torque.y.clamp(-surface.cop_x * fz, surface.cop_x * fz);
    WrenchSample {
        time: 0.0,
        force: Vector3::new(ft.x, ft.y, fz),
        torque: Vector3::new(tx, ty, tz),
    }
}

/// Semi-implicit penetration update that makes the penalty law reproduce
/// `f_cmd` exactly: solves `k_p d + k_d d' = f_cmd` with `d = d_prev + d' dt`.
pub fn penetration_step(d_prev: f64, f_cmd: f64, dt: f64, penalty: &PenaltyConfig) -> (f64, f64) {
    let rate = (f_cmd - penalty.k_p * d_prev) / (penalty.k_d + penalty.k_p * dt);
    (d_prev + rate * dt, rate)
}

/// Parameters of the foot's motion when a constraint is exceeded. The leg
/// holds the foot at its touchdown anchor through a spring-damper, so a
/// slipping foot moves until the spring takes up the excess demand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlipDynamics {
    pub foot_mass: f64,
    /// Leg stiffness (N/m) and damping (N s/m) toward the touchdown anchor.
    pub leg_stiffness: f64,
    pub leg_damping: f64,
    pub yaw_inertia: f64,
    pub yaw_stiffness: f64,
    pub yaw_damping: f64,
    pub tilt_inertia: f64,
    pub tilt_stiffness: f64,
    pub tilt_damping: f64,
    /// Sliding ends below this speed (m/s, rad/s) once the demand re-enters
    /// the cone.
    pub stick_speed: f64,
    pub stick_rate: f64,
}

impl Default for SlipDynamics {
    fn default() -> Self {
        Self {
            foot_mass: 1.0,
            leg_stiffness: 3000.0,
            leg_damping: 100.0,
            yaw_inertia: 0.01,
            yaw_stiffness: 30.0,
            yaw_damping: 1.0,
            tilt_inertia: 0.02,
            tilt_stiffness: 200.0,
            tilt_damping: 3.0,
            stick_speed: 1e-4,
            stick_rate: 1e-4,
        }
    }
}

/// Inertia, stiffness and damping of one slip axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlipAxis {
    pub inertia: f64,
    pub stiffness: f64,
    pub damping: f64,
    pub stick_speed: f64,
}

impl SlipDynamics {
    pub fn translational(&self) -> SlipAxis {
        SlipAxis {
            inertia: self.foot_mass,
            stiffness: self.leg_stiffness,
            damping: self.leg_damping,
            stick_speed: self.stick_speed,
        }
    }

    pub fn yaw(&self) -> SlipAxis {
        SlipAxis {
            inertia: self.yaw_inertia,
            stiffness: self.yaw_stiffness,
            damping: self.yaw_damping,
            stick_speed: self.stick_rate,
        }
    }
}

/// Stick/slip state of the translational axes (as a vector) or of yaw
/// (first component only). `offset` is the displacement from the anchor.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SlipState {
    pub sliding: bool,
    pub velocity: Vector2<f64>,
    pub offset: Vector2<f64>,
}

impl SlipState {
    /// Force the ground must supply to hold the foot still: the scripted
    /// demand plus the leg spring's pull toward the anchor.
    pub fn effective_demand(&self, demand: Vector2<f64>, axis: &SlipAxis) -> Vector2<f64> {
        demand + self.offset * axis.stiffness
    }

    /// Advances one tick with friction limit `limit`. Returns the velocity
    /// the friction force opposes during the tick (zero while sticking).
    pub fn step(&mut self, demand: Vector2<f64>, limit: f64, axis: &SlipAxis, dt: f64) -> Vector2<f64> {
        let de = self.effective_demand(demand, axis);
        let d = de.norm();
        if !self.sliding {
            if d <= limit {
                return Vector2::zeros();
            }
            self.sliding = true;
        }
        let v = self.velocity;
        let speed = v.norm();
        let friction = if speed > 0.0 {
            -v * (limit / speed)
        } else if d > 0.0 {
            de * (limit / d)
        } else {
            Vector2::zeros()
        };
        // Implicit in damping and stiffness.
        let denom = axis.inertia + dt * axis.damping + dt * dt * axis.stiffness;
        let v_new = (v * axis.inertia + (friction - de) * dt) / denom;
        let reversed = speed > 0.0 && v_new.dot(&v) < 0.0;
        let motion = if speed > 0.0 { v } else { -de };
        if reversed || v_new.norm() < axis.stick_speed {
            self.velocity = Vector2::zeros();
            if self.effective_demand(demand, axis).norm() <= limit {
                self.sliding = false;
            }
        } else {
            self.velocity = v_new;
            self.offset += v_new * dt;
        }
        motion
    }
}

/// Tipping about one support edge. `angle` is signed toward the demanded
/// centre-of-pressure side.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TiltState {
    pub tilting: bool,
    pub angle: f64,
    pub rate: f64,
}

impl TiltState {
    /// `lever` is the demanded centre of pressure along the axis, `bound`
    /// the support half-extent.
    pub fn step(&mut self, lever: f64, bound: f64, fz: f64, dyn_: &SlipDynamics, dt: f64) {
        if !self.tilting {
            if lever.abs() <= bound {
                return;
            }
            self.tilting = true;
            self.angle = 0.0;
            self.rate = 0.0;
        }
        let side = if self.angle != 0.0 {
            self.angle.signum()
        } else {
            lever.signum()
        };
        let drive = fz * (lever - side * bound) * side;
        // Implicit in damping and stiffness.
        let denom = dyn_.tilt_inertia + dt * dyn_.tilt_damping + dt * dt * dyn_.tilt_stiffness;
        let mag = self.angle.abs();
        let rate = side * self.rate;
        let new_rate = (dyn_.tilt_inertia * rate + dt * (drive - dyn_.tilt_stiffness * mag)) / denom;
        let new_mag = mag + new_rate * dt;
        if new_mag <= 0.0 {
            self.angle = 0.0;
            self.rate = 0.0;
            self.tilting = lever.abs() > bound;
        } else {
            self.angle = side * new_mag;
            self.rate = side * new_rate;
        }
    }
}
