//! Scripted quasi-static biped producing ground-truth base and foot
//! trajectories, contact wrenches with slip episodes, and true foot IMU
//! quantities.
//!
//! The base follows a smooth scripted path. Stance feet carry the base's
//! weight and inertial load, split between feet during double support, and
//! additionally receive scripted tangential, yaw and centre-of-pressure
//! demands proportional to their normal load. Demands outside a surface's
//! constraints make the foot slide, spin or tip (see [`contact`]).
//!
//! Kinematic quantities are logged so that discrete strapdown integration
//! reproduces them exactly: `v_k = (p_k - p_{k-1}) / dt`,
//! `a_k = (v_{k+1} - v_k) / dt` and `omega_k = R_k Log(R_k^T R_{k+1}) / dt`
//! (world frame).

pub mod contact;
pub mod gait;
pub mod terrain;

use nalgebra::{Rotation3, UnitQuaternion, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{Dof, WrenchSample};
use crate::kinematics::{
    log_so3, rot_x, rot_y, rot_z, wrap_angle, yaw_of, JointAngles, KinematicsError,
    LegGeometry, Side,
};
use crate::sensors::GRAVITY;

use contact::{
    contact_wrench, penetration_step, Demand, PenaltyConfig, SlipDynamics, SlipMotion, SlipState,
    TiltState,
};
use gait::{bump, min_jerk, GaitMode, GaitScript, NominalPath, SmoothFilter, Stance, Timeline};
use terrain::{check_constraints, ConstraintStatus, SurfaceSpec, Terrain, MIN_NORMAL_FORCE};

pub use gait::{GaitSwitch, GaitTiming};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("invalid gait: {0}")]
    InvalidGait(&'static str),
    #[error("invalid surface parameters")]
    InvalidSurface,
    #[error("invalid physics parameters: {0}")]
    InvalidPhysics(&'static str),
    #[error("step at t = {time:.3} s lands on no surface at ({x:.3}, {y:.3})")]
    NoSurface { time: f64, x: f64, y: f64 },
    #[error("negative normal force {0}")]
    NegativeNormalForce(f64),
    #[error("{side:?} leg at t = {time:.3} s: {source}")]
    Kinematics {
        time: f64,
        side: Side,
        source: KinematicsError,
    },
    #[error("integration diverged at t = {0:.3} s")]
    Divergence(f64),
}

/// Scripted per-stance demand profile. Tangential and yaw demands are
/// ratios of the foot's reference load (its share of the weight and the
/// scripted base acceleration, excluding load dips), so a load dip or an
/// under-loaded foot can leave the demand outside the friction limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemandProfile {
    /// Peak braking ratio early in stance and propulsion ratio late in stance.
    pub brake: f64,
    pub push: f64,
    /// Extra braking ratio while the foot loads and extra propulsion ratio
    /// while it unloads, each peaking halfway through the transfer.
    pub load_brake: f64,
    pub unload_push: f64,
    pub lateral: f64,
    /// Peak mid-stance yaw torque per unit load (m), and its extra peak
    /// while the foot loads.
    pub yaw: f64,
    pub load_yaw: f64,
    /// Forward centre of pressure at touchdown and liftoff (m).
    pub cop_heel: f64,
    pub cop_toe: f64,
    pub cop_lateral: f64,
    /// Relative per-stance random variation of every amplitude.
    pub jitter: f64,
    /// Walking in place scales translational demand and forward CoP travel.
    pub in_place_translation: f64,
    pub in_place_cop: f64,
    /// Probability that a single-support phase contains a brief vertical
    /// unloading of the base, its depth range as a fraction of the weight,
    /// and its duration (s).
    pub dip_probability: f64,
    pub dip_depth_min: f64,
    pub dip_depth_max: f64,
    pub dip_duration: f64,
}

impl Default for DemandProfile {
    fn default() -> Self {
        Self {
            brake: 0.25,
            push: 0.25,
            load_brake: 0.6,
            unload_push: 0.6,
            lateral: 0.05,
            yaw: 0.006,
            load_yaw: 0.015,
            cop_heel: -0.03,
            cop_toe: 0.06,
            cop_lateral: 0.015,
            jitter: 0.25,
            in_place_translation: 0.3,
            in_place_cop: 0.6,
            dip_probability: 0.5,
            dip_depth_min: 0.2,
            dip_depth_max: 0.5,
            dip_duration: 0.08,
        }
    }
}

/// Amplitudes of the swing-foot excursions that keep every foot IMU
/// channel excited during swing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwingProfile {
    pub forward: f64,
    pub lateral: f64,
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl Default for SwingProfile {
    fn default() -> Self {
        Self {
            forward: 0.02,
            lateral: 0.015,
            yaw: 0.05,
            pitch: 0.15,
            roll: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsConfig {
    pub mass: f64,
    pub dt: f64,
    pub penalty: PenaltyConfig,
    pub slip: SlipDynamics,
    pub demand: DemandProfile,
    pub swing: SwingProfile,
    pub base_height: f64,
    /// Lateral foothold offset from the path centre line (m).
    pub foot_spacing: f64,
    /// Lateral base sway per second of step duration (m/s).
    pub sway_rate: f64,
    pub bob: f64,
    /// Slip episodes smaller than these are not annotated (m, rad).
    pub min_episode_translation: f64,
    pub min_episode_rotation: f64,
    pub hip_offset: f64,
    pub thigh: f64,
    pub shank: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        let leg = LegGeometry::default();
        Self {
            mass: 30.0,
            dt: 0.001,
            penalty: PenaltyConfig::default(),
            slip: SlipDynamics::default(),
            demand: DemandProfile::default(),
            swing: SwingProfile::default(),
            base_height: 0.6,
            foot_spacing: 0.1,
            sway_rate: 0.05,
            bob: 0.005,
            min_episode_translation: 1e-3,
            min_episode_rotation: 0.01,
            hip_offset: leg.hip_offset,
            thigh: leg.thigh,
            shank: leg.shank,
        }
    }
}

impl PhysicsConfig {
    pub fn leg(&self) -> LegGeometry {
        LegGeometry {
            hip_offset: self.hip_offset,
            thigh: self.thigh,
            shank: self.shank,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.mass) || !pos(self.dt) || self.dt > 0.01 {
            return Err(ScenarioError::InvalidPhysics("mass and dt must be positive, dt <= 10 ms"));
        }
        if !pos(self.penalty.k_p) || !(self.penalty.k_d >= 0.0) {
            return Err(ScenarioError::InvalidPhysics("contact gains"));
        }
        let s = &self.slip;
        if ![s.foot_mass, s.yaw_inertia, s.tilt_inertia].iter().all(|v| pos(*v))
            || ![
                s.leg_stiffness,
                s.leg_damping,
                s.yaw_stiffness,
                s.yaw_damping,
                s.tilt_damping,
                s.tilt_stiffness,
            ]
                .iter()
                .all(|v| v.is_finite() && *v >= 0.0)
        {
            return Err(ScenarioError::InvalidPhysics("slip dynamics"));
        }
        let d = &self.demand;
        if !(0.0..=1.0).contains(&d.dip_probability)
            || !(0.0..1.0).contains(&d.jitter)
            || !(d.dip_depth_min >= 0.0 && d.dip_depth_min <= d.dip_depth_max && d.dip_depth_max < 0.9)
            || !pos(d.dip_duration)
        {
            return Err(ScenarioError::InvalidPhysics("demand profile"));
        }
        if !pos(self.base_height) || !pos(self.thigh) || !pos(self.shank) {
            return Err(ScenarioError::InvalidPhysics("leg geometry"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl Pose {
    pub fn rotation(&self) -> Rotation3<f64> {
        self.orientation.to_rotation_matrix()
    }
}

/// Pose with its discrete derivatives (world frame).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyTruth {
    pub pose: Pose,
    pub velocity: Vector3<f64>,
    pub angular_velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FootTruth {
    pub body: BodyTruth,
    /// Ground reaction on the foot, foot frame.
    pub wrench: WrenchSample,
    /// Constraint status of the demanded wrench; all violated when airborne.
    pub constraints: ConstraintStatus,
    pub joints: JointAngles,
    pub in_contact: bool,
    /// Stance phase in [0, 1]; `None` while swinging.
    pub stance_phase: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthSample {
    pub time: f64,
    pub base: BodyTruth,
    pub feet: [FootTruth; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlipKind {
    Translational,
    Rotational,
    Tilt,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlipEpisode {
    pub side: Side,
    pub kind: SlipKind,
    /// Endeffector DoF the episode moves most.
    pub dof: Dof,
    pub onset: f64,
    pub end: f64,
    /// Peak displacement (m) or rotation (rad) reached during the episode.
    pub magnitude: f64,
    pub normal_force_at_onset: f64,
    pub surface: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthLog {
    pub dt: f64,
    pub samples: Vec<TruthSample>,
    pub episodes: Vec<SlipEpisode>,
    pub terrain: Terrain,
}

impl GroundTruthLog {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
struct Foothold {
    position: Vector3<f64>,
    yaw: f64,
    surface: usize,
}

#[derive(Debug, Clone, Copy)]
struct StanceProfile {
    brake: f64,
    push: f64,
    load_brake: f64,
    unload_push: f64,
    load_yaw: f64,
    lateral: f64,
    yaw: f64,
    cop_heel: f64,
    cop_toe: f64,
    cop_lateral: f64,
}

impl StanceProfile {
    fn draw(p: &DemandProfile, mode: GaitMode, rng: &mut ChaCha8Rng) -> Self {
        let yaw_sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let mut j = || 1.0 + p.jitter * (2.0 * rng.random::<f64>() - 1.0);
        let (ts, cs) = match mode {
            GaitMode::Walk => (1.0, 1.0),
            GaitMode::WalkInPlace => (p.in_place_translation, p.in_place_cop),
        };
        Self {
            brake: ts * p.brake * j(),
            push: ts * p.push * j(),
            load_brake: ts * p.load_brake * j(),
            unload_push: ts * p.unload_push * j(),
            load_yaw: yaw_sign * p.load_yaw * j(),
            lateral: p.lateral * j(),
            yaw: yaw_sign * p.yaw * j(),
            cop_heel: cs * p.cop_heel * j(),
            cop_toe: cs * p.cop_toe * j(),
            cop_lateral: p.cop_lateral * j(),
        }
    }
}

fn gauss(x: f64, c: f64, w: f64) -> f64 {
    (-((x - c) / w).powi(2)).exp()
}

/// Open slip episode being tracked.
#[derive(Debug, Clone, Copy)]
struct OpenEpisode {
    kind: SlipKind,
    onset: f64,
    start: Vector3<f64>,
    start_yaw: f64,
    peak: f64,
    fz: f64,
    /// For tilt: true if pitching (beta), false if rolling (alpha).
    pitch: bool,
}

#[derive(Debug, Clone, Copy)]
struct Liftoff {
    position: Vector3<f64>,
    velocity: Vector3<f64>,
    yaw: f64,
    yaw_rate: f64,
    pitch: f64,
    roll: f64,
}

#[derive(Debug, Clone)]
struct FootSim {
    side: Side,
    /// Origin of the foot when flat on the ground.
    flat: Vector3<f64>,
    yaw: f64,
    pitch: TiltState,
    roll: TiltState,
    slide: SlipState,
    spin: SlipState,
    penetration: f64,
    stance: Option<usize>,
    surface: usize,
    profile: StanceProfile,
    liftoff: Option<Liftoff>,
    open: Vec<OpenEpisode>,
    prev_pose: Option<(Vector3<f64>, f64, f64, f64)>,
    rng: ChaCha8Rng,
}

/// Rotation and origin of a foot given its flat pose and tilt states.
fn stance_pose(
    flat: &Vector3<f64>,
    yaw: f64,
    pitch: &TiltState,
    roll: &TiltState,
    surface: &SurfaceSpec,
) -> (Vector3<f64>, Rotation3<f64>, f64, f64) {
    let r_flat = rot_z(yaw);
    let p_angle = pitch.angle;
    // Positive roll-tilt angle lifts the -y edge: a negative rotation about x.
    let r_angle = -roll.angle;
    let r_tilt = rot_y(p_angle) * rot_x(r_angle);
    let pivot = Vector3::new(
        p_angle.signum() * surface.cop_x * (p_angle != 0.0) as i32 as f64,
        roll.angle.signum() * surface.cop_y * (roll.angle != 0.0) as i32 as f64,
        0.0,
    );
    let origin = flat + r_flat * (pivot - r_tilt * pivot);
    (origin, r_flat * r_tilt, p_angle, r_angle)
}

/// Runs the scripted biped over `terrain` for `gait.duration` seconds.
pub fn run_scenario(
    gait: &GaitScript,
    terrain: &Terrain,
    physics: &PhysicsConfig,
    seed: u64,
) -> Result<GroundTruthLog, ScenarioError> {
    gait.validate()?;
    physics.validate()?;
    for s in &terrain.surfaces {
        s.validate()?;
    }
    let dt = physics.dt;
    let n = (gait.duration / dt).round() as usize;
    // Plan past the end so every step that starts inside the run has a
    // foothold and the final kinematic differences are defined.
    let horizon = gait.duration + 4.0 * gait.initial_stance.max(1.0) + 4.0;
    let timeline = Timeline::build(gait, horizon);
    let path = NominalPath::generate(gait, &timeline, dt, horizon);
    let stances = timeline.stances();

    // Footholds for every stance.
    let mut holds = Vec::with_capacity(stances.len());
    for st in &stances {
        let t_mid = match st.landed_by {
            None => 0.0,
            Some(_) => {
                let lo = if st.liftoff.is_finite() {
                    st.liftoff
                } else {
                    st.touchdown + 1.0
                };
                0.5 * (st.touchdown + lo)
            }
        };
        let (x, y, psi) = path.at_time(t_mid.min(horizon));
        let lat = st.side.sign() * physics.foot_spacing;
        let (px, py) = (x - lat * psi.sin(), y + lat * psi.cos());
        let idx = terrain
            .surface_index_at(px, py)
            .ok_or(ScenarioError::NoSurface {
                time: st.touchdown.max(0.0),
                x: px,
                y: py,
            })?;
        holds.push(Foothold {
            position: Vector3::new(px, py, terrain.surfaces[idx].height),
            yaw: psi,
            surface: idx,
        });
        if st.touchdown > gait.duration + 1.0 {
            break;
        }
    }
    // Initial stances carry a virtual touchdown before t = 0.
    let stance_at = |side: Side, t: f64| -> Option<usize> {
        stances
            .iter()
            .take(holds.len())
            .position(|s| s.side == side && t >= s.touchdown && t < s.liftoff)
    };

    // Single-support load dips: a brief smooth rise of the base whose
    // deceleration unloads the stance foot by the drawn fraction of weight.
    let m = n + 2;
    let mut dip_z = vec![0.0; m];
    {
        let d = &physics.demand;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0x200);
        let dur = d.dip_duration;
        for st in &timeline.steps {
            let u: f64 = rng.random();
            let place: f64 = rng.random();
            let depth = d.dip_depth_min + (d.dip_depth_max - d.dip_depth_min) * rng.random::<f64>();
            let ss = st.land - st.lift;
            if u >= d.dip_probability || ss < 1.5 * dur {
                continue;
            }
            let t0 = st.lift + 0.2 * ss + place * (0.6 * ss - dur);
            // bump'' reaches -24 at its centre.
            let h = depth * GRAVITY.z * dur * dur / 24.0;
            let k0 = (t0 / dt).ceil().max(0.0) as usize;
            let k1 = (((t0 + dur) / dt).floor() as usize).min(m - 1);
            for (k, z) in dip_z.iter_mut().enumerate().take(k1 + 1).skip(k0) {
                *z += h * bump((k as f64 * dt - t0) / dur);
            }
        }
    }
    let second_diff = |v: &[f64], k: usize| -> f64 {
        if k == 0 || k + 1 >= v.len() {
            0.0
        } else {
            (v[k + 1] - 2.0 * v[k] + v[k - 1]) / (dt * dt)
        }
    };

    // Base trajectory.
    let mut base_pos = Vec::with_capacity(m);
    let mut base_rot = Vec::with_capacity(m);
    {
        let mut f_sway = SmoothFilter::new(0.02, dt, 0.0);
        let mut f_yaw = SmoothFilter::new(0.02, dt, 0.0);
        let mut f_bob = SmoothFilter::new(0.02, dt, 0.0);
        let init_ground = 0.5
            * (holds[stance_at(Side::Left, 0.0).unwrap()].position.z
                + holds[stance_at(Side::Right, 0.0).unwrap()].position.z);
        let mut f_ground = SmoothFilter::new(0.1, dt, init_ground);
        for k in 0..m {
            let t = k as f64 * dt;
            let (x, y, psi) = (path.x[k], path.y[k], path.heading[k]);
            let (mut sway, mut hyaw, mut bob) = (0.0, 0.0, 0.0);
            if t >= timeline.initial_stance {
                let s = &timeline.steps[timeline.step_index(t)];
                let dur = s.end - s.lift;
                let tau = ((t - s.lift) / dur).clamp(0.0, 1.0);
                // Sway toward the stance foot (opposite of the swing side).
                let toward = -s.swing.sign();
                sway = toward * physics.sway_rate * dur * (std::f64::consts::PI * tau).sin();
                hyaw = 0.03 * toward * (std::f64::consts::PI * tau).sin();
                bob = -physics.bob * (2.0 * std::f64::consts::PI * tau).cos();
            }
            let mut ground = 0.0;
            for side in Side::BOTH {
                let share = timeline.load_share(side, t);
                if share > 0.0 {
                    if let Some(i) = stance_at(side, t) {
                        ground += share * holds[i].position.z;
                    }
                }
            }
            let sway = f_sway.step(sway);
            let hyaw = f_yaw.step(hyaw);
            let bob = f_bob.step(bob);
            let ground = f_ground.step(ground);
            base_pos.push(Vector3::new(
                x - sway * psi.sin(),
                y + sway * psi.cos(),
                physics.base_height + ground + bob + dip_z[k],
            ));
            base_rot.push(rot_z(psi + hyaw) * rot_y(0.02) * rot_x(-0.4 * sway));
        }
    }
    let base_acc = |k: usize| -> Vector3<f64> {
        if k == 0 || k + 1 >= m {
            Vector3::zeros()
        } else {
            (base_pos[k + 1] - 2.0 * base_pos[k] + base_pos[k - 1]) / (dt * dt)
        }
    };

    // Feet.
    let mut feet: Vec<FootSim> = Side::BOTH
        .iter()
        .map(|&side| {
            let i = stance_at(side, 0.0).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(0x100 + side.index() as u64);
            let profile = StanceProfile::draw(&physics.demand, gait.mode, &mut rng);
            FootSim {
                side,
                flat: holds[i].position,
                yaw: holds[i].yaw,
                pitch: TiltState::default(),
                roll: TiltState::default(),
                slide: SlipState::default(),
                spin: SlipState::default(),
                penetration: 0.0,
                stance: Some(i),
                surface: holds[i].surface,
                profile,
                liftoff: None,
                open: Vec::new(),
                prev_pose: None,
                rng,
            }
        })
        .collect();

    let mut foot_pos = vec![Vec::with_capacity(m); 2];
    let mut foot_rot = vec![Vec::with_capacity(m); 2];
    let mut wrenches = vec![Vec::with_capacity(m); 2];
    let mut flags = vec![Vec::with_capacity(m); 2];
    let mut phases = vec![Vec::with_capacity(m); 2];
    let mut episodes = Vec::new();
    let g = GRAVITY.z;

    for k in 0..m {
        let t = k as f64 * dt;
        let a_base = base_acc(k);
        for foot in feet.iter_mut() {
            let side = foot.side;
            let si = side.index();
            let swing = timeline.is_swinging(side, t);
            if let Some((step_idx, tau)) = swing {
                // Transition into swing: freeze liftoff state.
                if foot.stance.is_some() {
                    close_all(foot, t, &mut episodes, physics);
                    let (p, yaw, pitch, roll) = foot.prev_pose.unwrap();
                    let vel = match (foot_pos[si].len(), foot_pos[si].last()) {
                        (len, Some(last)) if len >= 2 => (last - foot_pos[si][len - 2]) / dt,
                        _ => Vector3::zeros(),
                    };
                    let yaw_rate = foot.spin.velocity.x;
                    foot.liftoff = Some(Liftoff {
                        position: p,
                        velocity: vel,
                        yaw,
                        yaw_rate,
                        pitch,
                        roll,
                    });
                    foot.stance = None;
                    foot.slide = SlipState::default();
                    foot.spin = SlipState::default();
                    foot.pitch = TiltState::default();
                    foot.roll = TiltState::default();
                    foot.penetration = 0.0;
                }
                let lo = foot.liftoff.unwrap();
                let step = &timeline.steps[step_idx];
                let target_idx = stances
                    .iter()
                    .position(|s| s.landed_by == Some(step_idx))
                    .filter(|&i| i < holds.len())
                    .ok_or(ScenarioError::Divergence(t))?;
                let target = holds[target_idx];
                let ss = step.land - step.lift;
                let (pos, rot, pose) = swing_pose(&lo, &target, tau, ss, gait, physics, side);
                foot.prev_pose = Some(pose);
                foot_pos[si].push(pos);
                foot_rot[si].push(rot);
                wrenches[si].push(WrenchSample::new(t, Vector3::zeros(), Vector3::zeros()));
                flags[si].push(ConstraintStatus::ALL_VIOLATED);
                phases[si].push(None);
                continue;
            }
            // Stance.
            let idx = stance_at(side, t).ok_or(ScenarioError::Divergence(t))?;
            if foot.stance != Some(idx) {
                // Touchdown on a new foothold.
                let h = holds[idx];
                foot.stance = Some(idx);
                foot.flat = h.position;
                foot.yaw = h.yaw;
                foot.surface = h.surface;
                foot.profile = StanceProfile::draw(&physics.demand, gait.mode, &mut foot.rng);
                foot.liftoff = None;
            }
            let st: &Stance = &stances[idx];
            let surface = terrain.surfaces[foot.surface];
            let share = timeline.load_share(side, t);
            let f_cmd = (share * physics.mass * (g + a_base.z)).max(0.0);
            let (d_new, d_rate) = penetration_step(foot.penetration, f_cmd, dt, &physics.penalty);
            foot.penetration = d_new;
            let fz = (physics.penalty.k_p * d_new + physics.penalty.k_d * d_rate).max(0.0);

            let phi = st.phase(t);
            let lam = st.load_progress(t);
            let rho = st.unload_progress(t);
            let pr = &foot.profile;
            let pi = std::f64::consts::PI;
            // Reference load excludes the dips, so they change F_z only.
            let f_ref = (share * physics.mass * (g + a_base.z - second_diff(&dip_z, k))).max(0.0);
            let r_flat_t = rot_z(foot.yaw).inverse();
            let inertial = r_flat_t * Vector3::new(a_base.x, a_base.y, 0.0) * (share * physics.mass);
            let ux = -pr.brake * gauss(phi, 0.15, 0.12) + pr.push * gauss(phi, 0.8, 0.12)
                - pr.load_brake * (pi * lam).sin()
                + pr.unload_push * (pi * rho).sin();
            let uy = -side.sign() * pr.lateral * (pi * phi).sin();
            let uz = pr.yaw * (2.0 * pi * phi).sin() + pr.load_yaw * (pi * lam).sin();
            let demand = Demand {
                tangential: Vector2::new(inertial.x + f_ref * ux, inertial.y + f_ref * uy),
                torque: Vector3::new(
                    fz * (-side.sign() * pr.cop_lateral * (pi * phi).sin()),
                    -fz * (pr.cop_heel + (pr.cop_toe - pr.cop_heel) * phi),
                    f_ref * uz,
                ),
            };
            // The leg's pull toward the anchor adds to what the ground must supply.
            let trans_axis = physics.slip.translational();
            let yaw_axis = physics.slip.yaw();
            let demand = Demand {
                tangential: foot.slide.effective_demand(demand.tangential, &trans_axis),
                torque: Vector3::new(
                    demand.torque.x,
                    demand.torque.y,
                    foot.spin.effective_demand(Vector2::new(demand.torque.z, 0.0), &yaw_axis).x,
                ),
            };
            let demanded = WrenchSample::new(
                t,
                Vector3::new(demand.tangential.x, demand.tangential.y, fz),
                demand.torque,
            );
            let status = check_constraints(&demanded, &surface)?;

            // Translational slip (state in the anchor's yaw frame).
            let was_sliding = foot.slide.sliding;
            let spring_t = foot.slide.offset * trans_axis.stiffness;
            let motion_v = foot.slide.step(demand.tangential - spring_t, surface.mu_xy * fz, &trans_axis, dt);
            let was_spinning = foot.spin.sliding;
            let spring_z = foot.spin.offset.x * yaw_axis.stiffness;
            let motion_w = foot.spin.step(
                Vector2::new(demand.torque.z - spring_z, 0.0),
                surface.mu_z * fz,
                &yaw_axis,
                dt,
            );
            let was_pitching = foot.pitch.tilting;
            let was_rolling = foot.roll.tilting;
            let lever_x = -demand.torque.y / fz.max(1e-9);
            let lever_y = demand.torque.x / fz.max(1e-9);
            foot.pitch.step(lever_x, surface.cop_x, fz, &physics.slip, dt);
            foot.roll.step(lever_y, surface.cop_y, fz, &physics.slip, dt);

            let motion = SlipMotion {
                velocity: motion_v,
                yaw_rate: motion_w.x,
            };
            let mut w = contact_wrench(d_new, d_rate, &demand, &motion, &surface, &physics.penalty);
            w.time = t;
            // A tipped foot touches the ground only along its support edge.
            if foot.pitch.angle != 0.0 {
                w.torque.y = -foot.pitch.angle.signum() * surface.cop_x * fz;
            }
            if foot.roll.angle != 0.0 {
                w.torque.x = foot.roll.angle.signum() * surface.cop_y * fz;
            }
            // Rounding residue at the end of unloading is not contact.
            if w.force.z < MIN_NORMAL_FORCE {
                w = WrenchSample::new(t, Vector3::zeros(), Vector3::zeros());
            }

            // Displace the foot from its anchor by the slip offsets.
            let flat = foot.flat + rot_z(foot.yaw) * Vector3::new(foot.slide.offset.x, foot.slide.offset.y, 0.0);
            let yaw = foot.yaw + foot.spin.offset.x;
            let (pos, rot, pa, ra) = stance_pose(&flat, yaw, &foot.pitch, &foot.roll, &surface);
            if !pos.iter().all(|v| v.is_finite()) {
                return Err(ScenarioError::Divergence(t));
            }
            foot.prev_pose = Some((pos, yaw, pa, ra));

            // Episode bookkeeping.
            track(foot, SlipKind::Translational, was_sliding, foot.slide.sliding, t, &pos, fz, true, &mut episodes, physics);
            track(foot, SlipKind::Rotational, was_spinning, foot.spin.sliding, t, &pos, fz, true, &mut episodes, physics);
            track(foot, SlipKind::Tilt, was_pitching, foot.pitch.tilting, t, &pos, fz, true, &mut episodes, physics);
            track(foot, SlipKind::Tilt, was_rolling, foot.roll.tilting, t, &pos, fz, false, &mut episodes, physics);
            update_peaks(foot, &pos);

            foot_pos[si].push(pos);
            foot_rot[si].push(rot);
            wrenches[si].push(w);
            flags[si].push(status);
            phases[si].push(Some(phi));
        }
    }
    for foot in feet.iter_mut() {
        close_all(foot, n as f64 * dt, &mut episodes, physics);
    }
    episodes.retain(|e| e.onset < n as f64 * dt);
    episodes.sort_by(|a, b| a.onset.total_cmp(&b.onset));

    // Differentiate and assemble.
    let leg = physics.leg();
    let body = |pos: &[Vector3<f64>], rot: &[Rotation3<f64>], k: usize| -> BodyTruth {
        let v = |j: usize| {
            if j == 0 {
                Vector3::zeros()
            } else {
                (pos[j] - pos[j - 1]) / dt
            }
        };
        let vel = v(k);
        let acc = (v(k + 1) - vel) / dt;
        let omega = rot[k] * log_so3(&(rot[k].inverse() * rot[k + 1])) / dt;
        BodyTruth {
            pose: Pose {
                position: pos[k],
                orientation: UnitQuaternion::from_rotation_matrix(&rot[k]),
            },
            velocity: vel,
            angular_velocity: omega,
            acceleration: acc,
        }
    };
    let mut samples = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 * dt;
        let base = body(&base_pos, &base_rot, k);
        let mut feet_out = [None, None];
        for side in Side::BOTH {
            let si = side.index();
            let fb = body(&foot_pos[si], &foot_rot[si], k);
            let rel_p = base_rot[k].inverse() * (foot_pos[si][k] - base_pos[k]);
            let rel_r = base_rot[k].inverse() * foot_rot[si][k];
            let joints = leg
                .inverse(side, &rel_p, &rel_r)
                .map_err(|source| ScenarioError::Kinematics { time: t, side, source })?;
            feet_out[si] = Some(FootTruth {
                body: fb,
                wrench: wrenches[si][k],
                constraints: flags[si][k],
                joints,
                in_contact: wrenches[si][k].force.z > 0.0,
                stance_phase: phases[si][k],
            });
        }
        samples.push(TruthSample {
            time: t,
            base,
            feet: [feet_out[0].unwrap(), feet_out[1].unwrap()],
        });
    }
    Ok(GroundTruthLog {
        dt,
        samples,
        episodes,
        terrain: terrain.clone(),
    })
}

fn swing_pose(
    lo: &Liftoff,
    target: &Foothold,
    tau: f64,
    ss: f64,
    gait: &GaitScript,
    physics: &PhysicsConfig,
    side: Side,
) -> (Vector3<f64>, Rotation3<f64>, (Vector3<f64>, f64, f64, f64)) {
    let s = min_jerk(tau);
    let b = bump(tau);
    let osc = b * (2.0 * std::f64::consts::PI * tau).sin();
    // Carries the liftoff velocity into the swing: g(0) = 0, g'(0) = 1.
    let carry = tau * (1.0 - tau).powi(4) * ss;
    let sw = &physics.swing;
    let heading = rot_z(target.yaw);
    let excursion = heading * Vector3::new(sw.forward * osc, side.sign() * sw.lateral * b, 0.0);
    let mut p = lo.position + (target.position - lo.position) * s + lo.velocity * carry + excursion;
    p.z += gait.step_height * b;
    let yaw = lo.yaw + wrap_angle(target.yaw - lo.yaw) * s + lo.yaw_rate * carry + sw.yaw * osc;
    let pitch = lo.pitch * (1.0 - s) - sw.pitch * osc;
    let roll = lo.roll * (1.0 - s) + side.sign() * sw.roll * b;
    let rot = rot_z(yaw) * rot_y(pitch) * rot_x(roll);
    (p, rot, (p, yaw, pitch, roll))
}

#[allow(clippy::too_many_arguments)]
fn track(
    foot: &mut FootSim,
    kind: SlipKind,
    before: bool,
    after: bool,
    t: f64,
    pos: &Vector3<f64>,
    fz: f64,
    pitch: bool,
    episodes: &mut Vec<SlipEpisode>,
    physics: &PhysicsConfig,
) {
    let same = |e: &OpenEpisode| e.kind == kind && (kind != SlipKind::Tilt || e.pitch == pitch);
    if !before && after {
        foot.open.push(OpenEpisode {
            kind,
            onset: t,
            start: *pos,
            start_yaw: foot.yaw + foot.spin.offset.x,
            peak: 0.0,
            fz,
            pitch,
        });
    } else if before && !after {
        if let Some(i) = foot.open.iter().position(same) {
            let e = foot.open.remove(i);
            finish(foot, e, t, episodes, physics);
        }
    }
}

fn update_peaks(foot: &mut FootSim, pos: &Vector3<f64>) {
    let (yaw, pitch, roll) = (foot.yaw + foot.spin.offset.x, foot.pitch.angle, foot.roll.angle);
    for e in foot.open.iter_mut() {
        let m = match e.kind {
            SlipKind::Translational => (pos.xy() - e.start.xy()).norm(),
            SlipKind::Rotational => wrap_angle(yaw - e.start_yaw).abs(),
            SlipKind::Tilt => {
                if e.pitch {
                    pitch.abs()
                } else {
                    roll.abs()
                }
            }
        };
        e.peak = e.peak.max(m);
    }
}

fn finish(
    foot: &FootSim,
    e: OpenEpisode,
    t: f64,
    episodes: &mut Vec<SlipEpisode>,
    physics: &PhysicsConfig,
) {
    let (dof, threshold) = match e.kind {
        SlipKind::Translational => {
            let (p, ..) = foot.prev_pose.unwrap_or((e.start, 0.0, 0.0, 0.0));
            let local = rot_z(foot.yaw).inverse() * (p - e.start);
            let dof = if local.x.abs() >= local.y.abs() { Dof::X } else { Dof::Y };
            (dof, physics.min_episode_translation)
        }
        SlipKind::Rotational => (Dof::Gamma, physics.min_episode_rotation),
        SlipKind::Tilt => (
            if e.pitch { Dof::Beta } else { Dof::Alpha },
            physics.min_episode_rotation,
        ),
    };
    if e.peak >= threshold {
        episodes.push(SlipEpisode {
            side: foot.side,
            kind: e.kind,
            dof,
            onset: e.onset,
            end: t,
            magnitude: e.peak,
            normal_force_at_onset: e.fz,
            surface: foot.surface,
        });
    }
}

fn close_all(
    foot: &mut FootSim,
    t: f64,
    episodes: &mut Vec<SlipEpisode>,
    physics: &PhysicsConfig,
) {
    let open = std::mem::take(&mut foot.open);
    for e in open {
        finish(foot, e, t, episodes, physics);
    }
}

/// Heading (yaw) of a pose.
pub fn pose_yaw(p: &Pose) -> f64 {
    yaw_of(&p.rotation())
}

/// Raised low-friction patches placed along the nominal walking path every
/// `spacing` metres, starting `start` metres in, with lateral jitter.
pub fn patches_along_path(
    gait: &GaitScript,
    physics: &PhysicsConfig,
    start: f64,
    spacing: f64,
    jitter: f64,
    seed: u64,
) -> Terrain {
    let horizon = gait.duration + 4.0 * gait.initial_stance.max(1.0) + 4.0;
    let timeline = Timeline::build(gait, horizon);
    let path = NominalPath::generate(gait, &timeline, physics.dt, horizon);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x7e11);
    let mut surfaces = vec![SurfaceSpec::ground()];
    let mut travelled = 0.0;
    let mut next = start;
    for k in 1..path.len() {
        travelled += ((path.x[k] - path.x[k - 1]).powi(2) + (path.y[k] - path.y[k - 1]).powi(2)).sqrt();
        if travelled >= next {
            let psi = path.heading[k];
            let off = jitter * (2.0 * rng.random::<f64>() - 1.0);
            surfaces.push(SurfaceSpec::rough_patch(
                path.x[k] - off * psi.sin(),
                path.y[k] + off * psi.cos(),
            ));
            next += spacing;
        }
    }
    Terrain::new(surfaces)
}

/// One rough patch under the starting position (for walking in place).
pub fn patch_under_start() -> Terrain {
    Terrain::new(vec![SurfaceSpec::ground(), SurfaceSpec::rough_patch(0.0, 0.0)])
}
