//! Gait scripts, the step timeline they expand to, and the smooth base path.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ScenarioError;
use crate::kinematics::Side;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaitMode {
    Walk,
    WalkInPlace,
}

/// Support durations in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitTiming {
    pub single_support: f64,
    pub double_support: f64,
}

impl GaitTiming {
    pub const FAST: GaitTiming = GaitTiming {
        single_support: 0.5,
        double_support: 0.05,
    };
    pub const SLOW: GaitTiming = GaitTiming {
        single_support: 1.0,
        double_support: 0.5,
    };

    pub fn step_duration(&self) -> f64 {
        self.single_support + self.double_support
    }
}

/// Switch to `timing` for all steps starting at or after `time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitSwitch {
    pub time: f64,
    pub single_support: f64,
    pub double_support: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaitScript {
    pub single_support: f64,
    pub double_support: f64,
    /// Base advance per step (m).
    pub step_length: f64,
    pub step_height: f64,
    pub duration: f64,
    pub mode: GaitMode,
    pub gait_schedule: Vec<GaitSwitch>,
    /// Heading oscillation amplitude (rad) and period (s); zero amplitude
    /// walks straight along +x.
    pub heading_amplitude: f64,
    pub heading_period: f64,
    /// Initial double-support period before the first step (s).
    pub initial_stance: f64,
}

impl Default for GaitScript {
    fn default() -> Self {
        Self {
            single_support: GaitTiming::FAST.single_support,
            double_support: GaitTiming::FAST.double_support,
            step_length: 0.2,
            step_height: 0.06,
            duration: 60.0,
            mode: GaitMode::Walk,
            gait_schedule: Vec::new(),
            heading_amplitude: 0.0,
            heading_period: 20.0,
            initial_stance: 0.5,
        }
    }
}

impl GaitScript {
    pub fn with_timing(mut self, t: GaitTiming) -> Self {
        self.single_support = t.single_support;
        self.double_support = t.double_support;
        self
    }

    pub fn base_timing(&self) -> GaitTiming {
        GaitTiming {
            single_support: self.single_support,
            double_support: self.double_support,
        }
    }

    pub fn timing_at(&self, t: f64) -> GaitTiming {
        self.gait_schedule
            .iter()
            .filter(|s| s.time <= t)
            .last()
            .map(|s| GaitTiming {
                single_support: s.single_support,
                double_support: s.double_support,
            })
            .unwrap_or_else(|| self.base_timing())
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        let timings_ok = positive(self.single_support)
            && positive(self.double_support)
            && self
                .gait_schedule
                .iter()
                .all(|s| positive(s.single_support) && positive(s.double_support) && s.time.is_finite());
        let sorted = self.gait_schedule.windows(2).all(|w| w[0].time <= w[1].time);
        if !timings_ok || !sorted {
            return Err(ScenarioError::InvalidGait("support durations must be positive and switches sorted"));
        }
        if !positive(self.duration) || !positive(self.initial_stance) {
            return Err(ScenarioError::InvalidGait("duration and initial stance must be positive"));
        }
        if !(self.step_length.is_finite() && self.step_length >= 0.0 && self.step_length <= 0.3) {
            return Err(ScenarioError::InvalidGait("step length must lie in [0, 0.3] m"));
        }
        if !(self.step_height.is_finite() && self.step_height > 0.0 && self.step_height <= 0.15) {
            return Err(ScenarioError::InvalidGait("step height must lie in (0, 0.15] m"));
        }
        if !(self.heading_amplitude.is_finite() && positive(self.heading_period)) {
            return Err(ScenarioError::InvalidGait("heading oscillation must be finite"));
        }
        Ok(())
    }
}

/// A schedule that re-draws single/double support durations every
/// `segment` seconds between the slow and fast presets.
pub fn mixed_schedule(duration: f64, segment: f64, seed: u64) -> Vec<GaitSwitch> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x6a17);
    let (f, s) = (GaitTiming::FAST, GaitTiming::SLOW);
    let mut out = Vec::new();
    let mut t = 0.0;
    let mut k = 0usize;
    while t < duration {
        // Alternate between the fast and slow halves of the range so every
        // schedule spans both regimes.
        let u: f64 = rng.random();
        let lam = if k % 2 == 0 { 0.5 * u } else { 0.5 + 0.5 * u };
        out.push(GaitSwitch {
            time: t,
            single_support: f.single_support + lam * (s.single_support - f.single_support),
            double_support: f.double_support + lam * (s.double_support - f.double_support),
        });
        t += segment;
        k += 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub swing: Side,
    pub lift: f64,
    pub land: f64,
    /// End of the double support that follows landing.
    pub end: f64,
}

/// Expanded step sequence covering at least `horizon` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    pub initial_stance: f64,
    pub steps: Vec<Step>,
}

/// What one foot is doing at an instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FootPhase {
    /// `stance` indexes [`Timeline::stances`].
    Stance { stance: usize, share: f64 },
    Swing { step: usize, tau: f64 },
}

/// One uninterrupted ground contact of one foot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stance {
    pub side: Side,
    /// Step whose landing starts this stance; `None` for the initial stance.
    pub landed_by: Option<usize>,
    pub touchdown: f64,
    pub liftoff: f64,
    /// End of the loading double support and start of the unloading one.
    pub loaded: f64,
    pub unloading: f64,
}

impl Stance {
    pub fn phase(&self, t: f64) -> f64 {
        ((t - self.touchdown) / (self.liftoff - self.touchdown)).clamp(0.0, 1.0)
    }

    pub fn load_progress(&self, t: f64) -> f64 {
        if t >= self.loaded {
            1.0
        } else {
            ((t - self.touchdown) / (self.loaded - self.touchdown)).clamp(0.0, 1.0)
        }
    }

    pub fn unload_progress(&self, t: f64) -> f64 {
        if t <= self.unloading {
            0.0
        } else {
            ((t - self.unloading) / (self.liftoff - self.unloading)).clamp(0.0, 1.0)
        }
    }
}

impl Timeline {
    pub fn build(gait: &GaitScript, horizon: f64) -> Timeline {
        let mut steps = Vec::new();
        let mut t = gait.initial_stance;
        let mut swing = Side::Right;
        while t < horizon {
            let g = gait.timing_at(t);
            let land = t + g.single_support;
            let end = land + g.double_support;
            steps.push(Step {
                swing,
                lift: t,
                land,
                end,
            });
            t = end;
            swing = swing.other();
        }
        Timeline {
            initial_stance: gait.initial_stance,
            steps,
        }
    }

    /// Stances of both feet ordered by touchdown. Initial stances get a
    /// virtual touchdown so their phase matches a regular stance.
    pub fn stances(&self) -> Vec<Stance> {
        let mut out = Vec::new();
        for side in Side::BOTH {
            let lifts: Vec<usize> = (0..self.steps.len())
                .filter(|&k| self.steps[k].swing == side)
                .collect();
            let first_lift = lifts.first().map(|&k| self.steps[k].lift).unwrap_or(f64::INFINITY);
            let unloading = |lift_step: Option<usize>, fallback: f64| match lift_step {
                Some(k) if k > 0 => self.steps[k - 1].land,
                Some(_) => 0.0,
                None => fallback,
            };
            let first_unload = unloading(lifts.first().copied(), f64::INFINITY);
            let nominal = self.nominal_stance_duration(lifts.first().copied());
            out.push(Stance {
                side,
                landed_by: None,
                touchdown: (first_lift.min(1e9) - nominal).min(0.0),
                liftoff: first_lift,
                loaded: 0.0,
                unloading: first_unload,
            });
            for (i, &k) in lifts.iter().enumerate() {
                let step = &self.steps[k];
                let next = lifts.get(i + 1).copied();
                let liftoff = next.map(|n| self.steps[n].lift).unwrap_or(f64::INFINITY);
                out.push(Stance {
                    side,
                    landed_by: Some(k),
                    touchdown: step.land,
                    liftoff,
                    loaded: step.end,
                    unloading: unloading(next, f64::INFINITY),
                });
            }
        }
        out.sort_by(|a, b| a.touchdown.total_cmp(&b.touchdown));
        out
    }

    fn nominal_stance_duration(&self, first_lift: Option<usize>) -> f64 {
        match first_lift {
            Some(k) => {
                let s = &self.steps[k];
                (s.land - s.lift) + 2.0 * (s.end - s.land)
            }
            None => 1.0,
        }
    }

    /// Vertical load share of `side` at time `t` (stance feet share sums to 1).
    pub fn load_share(&self, side: Side, t: f64) -> f64 {
        if t < self.initial_stance {
            let s = 0.5 * (1.0 + (PI * t / self.initial_stance).cos());
            // The first step lifts the right foot: it unloads to zero.
            let right = 0.5 * s;
            return match side {
                Side::Right => right,
                Side::Left => 1.0 - right,
            };
        }
        let k = self.step_index(t);
        let step = &self.steps[k];
        if t < step.land {
            return if side == step.swing { 0.0 } else { 1.0 };
        }
        let tau = ((t - step.land) / (step.end - step.land)).clamp(0.0, 1.0);
        let lead = 0.5 * (1.0 - (PI * tau).cos());
        if side == step.swing {
            lead
        } else {
            1.0 - lead
        }
    }

    pub fn step_index(&self, t: f64) -> usize {
        self.steps
            .partition_point(|s| s.end <= t)
            .min(self.steps.len().saturating_sub(1))
    }

    pub fn is_swinging(&self, side: Side, t: f64) -> Option<(usize, f64)> {
        if t < self.initial_stance || self.steps.is_empty() {
            return None;
        }
        let k = self.step_index(t);
        let s = &self.steps[k];
        if s.swing == side && t >= s.lift && t < s.land {
            Some((k, (t - s.lift) / (s.land - s.lift)))
        } else {
            None
        }
    }
}

/// Minimum-jerk blend 0 -> 1 with zero end velocity and acceleration.
pub fn min_jerk(tau: f64) -> f64 {
    let t = tau.clamp(0.0, 1.0);
    t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

/// Smooth bump with peak 1 at 0.5 and vanishing first and second
/// derivatives at both ends.
pub fn bump(tau: f64) -> f64 {
    let t = tau.clamp(0.0, 1.0);
    64.0 * (t * (1.0 - t)).powi(3)
}

/// Three cascaded first-order low-pass stages: turns piecewise-continuous
/// targets into trajectories with continuous acceleration.
#[derive(Debug, Clone, Copy)]
pub struct SmoothFilter {
    alpha: f64,
    y: [f64; 3],
}

impl SmoothFilter {
    pub fn new(tau: f64, dt: f64, initial: f64) -> Self {
        Self {
            alpha: 1.0 - (-dt / tau).exp(),
            y: [initial; 3],
        }
    }

    pub fn step(&mut self, x: f64) -> f64 {
        self.y[0] += self.alpha * (x - self.y[0]);
        self.y[1] += self.alpha * (self.y[0] - self.y[1]);
        self.y[2] += self.alpha * (self.y[1] - self.y[2]);
        self.y[2]
    }
}

/// Nominal (sway-free) ground path: position and heading per tick.
#[derive(Debug, Clone, PartialEq)]
pub struct NominalPath {
    pub dt: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub heading: Vec<f64>,
}

impl NominalPath {
    pub fn generate(gait: &GaitScript, timeline: &Timeline, dt: f64, horizon: f64) -> NominalPath {
        let n = (horizon / dt).ceil() as usize + 1;
        let mut speed = SmoothFilter::new(0.2, dt, 0.0);
        let (mut x, mut y) = (0.0, 0.0);
        let mut path = NominalPath {
            dt,
            x: Vec::with_capacity(n),
            y: Vec::with_capacity(n),
            heading: Vec::with_capacity(n),
        };
        for k in 0..n {
            let t = k as f64 * dt;
            let psi = gait.heading_amplitude * (2.0 * PI * t / gait.heading_period).sin();
            path.x.push(x);
            path.y.push(y);
            path.heading.push(psi);
            let target = match gait.mode {
                GaitMode::Walk if t >= timeline.initial_stance => {
                    let s = &timeline.steps[timeline.step_index(t)];
                    gait.step_length / (s.end - s.lift)
                }
                _ => 0.0,
            };
            let v = speed.step(target);
            x += v * psi.cos() * dt;
            y += v * psi.sin() * dt;
        }
        path
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn at_time(&self, t: f64) -> (f64, f64, f64) {
        let k = ((t / self.dt).round().max(0.0) as usize).min(self.len() - 1);
        (self.x[k], self.y[k], self.heading[k])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn load_shares_sum_to_one() {
        let gait = GaitScript::default();
        let tl = Timeline::build(&gait, 10.0);
        for k in 0..10_000 {
            let t = k as f64 * 0.001;
            let s = tl.load_share(Side::Left, t) + tl.load_share(Side::Right, t);
            assert!((s - 1.0).abs() < 1e-12, "t={t} sum={s}");
        }
    }

    #[test]
    fn swinging_foot_carries_no_load() {
        let gait = GaitScript::default().with_timing(GaitTiming::SLOW);
        let tl = Timeline::build(&gait, 10.0);
        for k in 0..10_000 {
            let t = k as f64 * 0.001;
            for side in Side::BOTH {
                if tl.is_swinging(side, t).is_some() {
                    assert_eq!(tl.load_share(side, t), 0.0);
                }
            }
        }
    }

    #[test]
    fn stances_cover_each_foot_without_gaps() {
        let gait = GaitScript::default();
        let tl = Timeline::build(&gait, 5.0);
        let stances = tl.stances();
        for side in Side::BOTH {
            let mine: Vec<_> = stances.iter().filter(|s| s.side == side).collect();
            for pair in mine.windows(2) {
                let step = pair[1].landed_by.unwrap();
                assert_eq!(pair[0].liftoff, tl.steps[step].lift);
                assert_eq!(pair[1].touchdown, tl.steps[step].land);
            }
        }
    }

    #[test]
    fn schedule_switches_timing() {
        let mut gait = GaitScript::default();
        gait.gait_schedule = vec![
            GaitSwitch {
                time: 0.0,
                single_support: 0.5,
                double_support: 0.05,
            },
            GaitSwitch {
                time: 5.0,
                single_support: 1.0,
                double_support: 0.5,
            },
        ];
        assert_eq!(gait.timing_at(4.9), GaitTiming::FAST);
        assert_eq!(gait.timing_at(5.0), GaitTiming::SLOW);
        let mixed = mixed_schedule(60.0, 6.0, 3);
        assert_eq!(mixed.len(), 10);
        assert!(mixed.iter().any(|s| s.double_support < 0.2));
        assert!(mixed.iter().any(|s| s.double_support > 0.3));
    }

    #[test]
    fn bump_and_min_jerk_shapes() {
        assert_eq!(min_jerk(0.0), 0.0);
        assert_eq!(min_jerk(1.0), 1.0);
        assert!((bump(0.5) - 1.0).abs() < 1e-15);
        assert_eq!(bump(0.0), 0.0);
    }

    #[test]
    fn invalid_gait_rejected() {
        let mut gait = GaitScript::default();
        gait.single_support = 0.0;
        assert!(gait.validate().is_err());
        let mut gait = GaitScript::default();
        gait.duration = -1.0;
        assert!(gait.validate().is_err());
    }
}
