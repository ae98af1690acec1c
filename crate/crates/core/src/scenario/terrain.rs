use serde::{Deserialize, Serialize};

use super::ScenarioError;
use crate::features::WrenchSample;

/// Normal forces below this count as "no contact" for the constraint checks.
pub const MIN_NORMAL_FORCE: f64 = 1e-6;

/// A horizontal surface region with its own friction and support limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurfaceSpec {
    pub mu_xy: f64,
    /// Rotational friction coefficient (m): |tau_z| <= mu_z F_z.
    pub mu_z: f64,
    /// Support-polygon half-extents (m) along the foot x and y axes.
    pub cop_x: f64,
    pub cop_y: f64,
    pub height: f64,
    /// Side length of the square patch (m); infinite for open ground.
    pub extent: f64,
    pub center_x: f64,
    pub center_y: f64,
}

impl Default for SurfaceSpec {
    fn default() -> Self {
        Self::ground()
    }
}

impl SurfaceSpec {
    /// Nominal open ground.
    pub fn ground() -> Self {
        Self {
            mu_xy: 0.8,
            mu_z: 0.03,
            cop_x: 0.10,
            cop_y: 0.05,
            height: 0.0,
            extent: f64::INFINITY,
            center_x: 0.0,
            center_y: 0.0,
        }
    }

    /// Raised low-friction patch centred at `(x, y)`.
    pub fn rough_patch(x: f64, y: f64) -> Self {
        Self {
            mu_xy: 0.4,
            mu_z: 0.01,
            cop_x: 0.045,
            cop_y: 0.02,
            height: 0.03,
            extent: 0.4,
            center_x: x,
            center_y: y,
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        if self.extent.is_infinite() {
            return true;
        }
        let h = 0.5 * self.extent;
        (x - self.center_x).abs() <= h && (y - self.center_y).abs() <= h
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let ok = [self.mu_xy, self.mu_z, self.cop_x, self.cop_y]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
            && self.height.is_finite()
            && self.extent > 0.0
            && self.center_x.is_finite()
            && self.center_y.is_finite();
        if ok {
            Ok(())
        } else {
            Err(ScenarioError::InvalidSurface)
        }
    }
}

/// Ordered surface list; where regions overlap the last entry wins.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Terrain {
    pub surfaces: Vec<SurfaceSpec>,
}

impl Terrain {
    pub fn flat() -> Self {
        Self {
            surfaces: vec![SurfaceSpec::ground()],
        }
    }

    pub fn new(surfaces: Vec<SurfaceSpec>) -> Self {
        Self { surfaces }
    }

    pub fn surface_index_at(&self, x: f64, y: f64) -> Option<usize> {
        self.surfaces.iter().rposition(|s| s.contains(x, y))
    }

    pub fn surface_at(&self, x: f64, y: f64) -> Option<&SurfaceSpec> {
        self.surface_index_at(x, y).map(|i| &self.surfaces[i])
    }

    pub fn patch_count(&self) -> usize {
        self.surfaces.iter().filter(|s| s.extent.is_finite()).count()
    }
}

/// Which of the three contact constraints hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConstraintStatus {
    pub translational: bool,
    pub cop: bool,
    pub rotational: bool,
}

impl ConstraintStatus {
    pub const ALL_VIOLATED: ConstraintStatus = ConstraintStatus {
        translational: false,
        cop: false,
        rotational: false,
    };

    pub fn all_hold(&self) -> bool {
        self.translational && self.cop && self.rotational
    }
}

/// Evaluates static friction, centre-of-pressure and rotational friction
/// for a wrench expressed in the foot frame. Below [`MIN_NORMAL_FORCE`] all
/// three report violated.
pub fn check_constraints(
    wrench: &WrenchSample,
    surface: &SurfaceSpec,
) -> Result<ConstraintStatus, ScenarioError> {
    let f = wrench.force;
    let t = wrench.torque;
    if f.z < 0.0 || !f.z.is_finite() {
        return Err(ScenarioError::NegativeNormalForce(f.z));
    }
    if f.z < MIN_NORMAL_FORCE {
        return Ok(ConstraintStatus::ALL_VIOLATED);
    }
    Ok(ConstraintStatus {
        translational: f.x.hypot(f.y) <= surface.mu_xy * f.z,
        cop: (t.y / f.z).abs() <= surface.cop_x && (t.x / f.z).abs() <= surface.cop_y,
        rotational: t.z.abs() <= surface.mu_z * f.z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn wrench(f: [f64; 3], t: [f64; 3]) -> WrenchSample {
        WrenchSample::new(0.0, Vector3::from(f), Vector3::from(t))
    }

    #[test]
    fn friction_boundary_holds_with_equality() {
        let s = SurfaceSpec {
            mu_xy: 0.5,
            ..SurfaceSpec::ground()
        };
        let c = check_constraints(&wrench([3.0, 4.0, 10.0], [0.0; 3]), &s).unwrap();
        assert!(c.translational);
    }

    #[test]
    fn rotational_violation() {
        let s = SurfaceSpec {
            mu_z: 0.1,
            ..SurfaceSpec::ground()
        };
        let c = check_constraints(&wrench([0.0, 0.0, 10.0], [0.0, 0.0, 2.0]), &s).unwrap();
        assert!(!c.rotational);
        assert!(c.translational && c.cop);
    }

    #[test]
    fn airborne_violates_everything() {
        let c = check_constraints(&wrench([0.0; 3], [0.0; 3]), &SurfaceSpec::ground()).unwrap();
        assert_eq!(c, ConstraintStatus::ALL_VIOLATED);
    }

    #[test]
    fn cop_limits_use_matching_torque_axes() {
        let s = SurfaceSpec::ground();
        // tau_y / F_z = 0.08 <= cop_x = 0.10, tau_x / F_z = 0.06 > cop_y = 0.05
        let c = check_constraints(&wrench([0.0, 0.0, 100.0], [6.0, -8.0, 0.0]), &s).unwrap();
        assert!(!c.cop);
        let c = check_constraints(&wrench([0.0, 0.0, 100.0], [4.0, -8.0, 0.0]), &s).unwrap();
        assert!(c.cop);
    }

    #[test]
    fn negative_normal_force_rejected() {
        assert!(check_constraints(&wrench([0.0, 0.0, -1.0], [0.0; 3]), &SurfaceSpec::ground()).is_err());
    }

    #[test]
    fn last_matching_surface_wins() {
        let t = Terrain::new(vec![SurfaceSpec::ground(), SurfaceSpec::rough_patch(1.0, 0.0)]);
        assert_eq!(t.surface_index_at(1.1, 0.1), Some(1));
        assert_eq!(t.surface_index_at(1.3, 0.0), Some(0));
        let holes = Terrain::new(vec![SurfaceSpec::rough_patch(0.0, 0.0)]);
        assert_eq!(holes.surface_index_at(5.0, 0.0), None);
    }
}
