//! Cosserat rod simulation with XPBD.
//!
//! The rod is a chain of particles joined by segments. Every segment carries
//! an orientation quaternion whose local +z axis should follow the segment
//! direction (stretch-shear constraint); adjacent orientations are tied by the
//! rest Darboux rotation (bend-twist constraint). Grippers are kinematic and
//! pin grasped particles through zero-compliance point constraints.
//!
//! A frame of `frame_dt` seconds is split into `substeps`, each running
//! `iterations` constraint passes. By default a pass solves the linearized
//! stretch-shear and bend-twist system along the whole chain at once
//! (block tridiagonal) and then sweeps contacts; `SolverKind::GaussSeidel`
//! sweeps every constraint in list order instead.

mod bench;
mod collision;
mod constraints;
mod direct;
mod grasp;
mod step;

pub use bench::{simbench, BenchFrame, SimbenchReport};
pub use collision::{closest_points_segments, resolve_collisions, segment_contact_pairs};
pub use constraints::{
    eval_bend_twist, eval_stretch_shear, xpbd_project, Constraint, ProjectStats,
    ProjectionContext, SolverKind,
};
pub use grasp::update_grasp;
pub use step::{step_frame, FrameDiagnostics, FrameOutput, Simulation};

use crate::math::{canonical, rotation_from_z, Quat, Vec3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("non-finite input: {0}")]
    NumericInput(String),
    #[error("solver diverged at frame {frame}: |coordinate| exceeded {limit} m")]
    Divergence { frame: u64, limit: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Coordinate magnitude treated as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1.0e3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RodMaterial {
    /// m
    pub radius: f64,
    /// kg/m
    pub linear_density: f64,
    pub stretch_shear_compliance: f64,
    pub bend_twist_compliance: f64,
    /// Velocity decay rate (1/s).
    pub damping: f64,
    pub ground_friction: f64,
    pub self_friction: f64,
}

impl Default for RodMaterial {
    fn default() -> Self {
        Self {
            radius: 0.005,
            linear_density: 0.05,
            stretch_shear_compliance: 0.0,
            bend_twist_compliance: 2.0,
            damping: 2.0,
            ground_friction: 0.4,
            self_friction: 0.1,
        }
    }
}

impl RodMaterial {
    pub fn validate(&self) -> Result<(), SimError> {
        let checks = [
            (self.radius > 0.0, "radius must be > 0"),
            (self.linear_density > 0.0, "linear_density must be > 0"),
            (self.stretch_shear_compliance >= 0.0, "stretch_shear_compliance must be >= 0"),
            (self.bend_twist_compliance >= 0.0, "bend_twist_compliance must be >= 0"),
            (self.damping >= 0.0, "damping must be >= 0"),
            (self.ground_friction >= 0.0, "ground_friction must be >= 0"),
            (self.self_friction >= 0.0, "self_friction must be >= 0"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(SimError::InvalidParameter(msg.into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub frame_dt: f64,
    pub substeps: usize,
    pub iterations: usize,
    pub gravity: [f64; 3],
    pub ground_height: f64,
    pub ground: bool,
    pub self_collision: bool,
    pub grasp_radius: f64,
    pub grasp_close_threshold: f64,
    pub grasp_open_threshold: f64,
    pub collision_margin: f64,
    #[serde(default)]
    pub solver: SolverKind,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            frame_dt: 1.0 / 30.0,
            substeps: 20,
            iterations: 2,
            gravity: [0.0, 0.0, -9.81],
            ground_height: 0.0,
            ground: true,
            self_collision: true,
            grasp_radius: 0.02,
            grasp_close_threshold: 0.3,
            grasp_open_threshold: 0.5,
            collision_margin: 0.002,
            solver: SolverKind::Direct,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.frame_dt > 0.0) {
            return Err(SimError::InvalidParameter("frame_dt must be > 0".into()));
        }
        if self.substeps == 0 || self.iterations == 0 {
            return Err(SimError::InvalidParameter(
                "substeps and iterations must be >= 1".into(),
            ));
        }
        if self.grasp_open_threshold < self.grasp_close_threshold {
            return Err(SimError::InvalidParameter(
                "grasp_open_threshold must be >= grasp_close_threshold".into(),
            ));
        }
        Ok(())
    }

    pub fn gravity(&self) -> Vec3 {
        Vec3::from(self.gravity)
    }

    pub fn dt_sub(&self) -> f64 {
        self.frame_dt / self.substeps as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RodState {
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    /// One per segment; local +z follows the segment.
    pub orientations: Vec<Quat>,
    pub angular_velocities: Vec<Vec3>,
    pub rest_lengths: Vec<f64>,
    /// One per interior joint: rest value of `conj(u_i) * u_{i+1}`.
    pub rest_darboux: Vec<Quat>,
    /// Zero pins the particle.
    pub inverse_masses: Vec<f64>,
    /// Isotropic inverse rotational inertia per segment.
    pub inverse_inertias: Vec<f64>,
    /// Number of frames stepped since `init_rod`.
    pub frame: u64,
}

impl RodState {
    pub fn particle_count(&self) -> usize {
        self.positions.len()
    }

    pub fn segment_count(&self) -> usize {
        self.rest_lengths.len()
    }

    pub fn rest_length_total(&self) -> f64 {
        self.rest_lengths.iter().sum()
    }

    pub fn arc_length(&self) -> f64 {
        self.positions.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    pub fn particle_mass(&self, i: usize) -> f64 {
        let w = self.inverse_masses[i];
        if w > 0.0 {
            1.0 / w
        } else {
            0.0
        }
    }

    /// Sum of m·v over particles with finite mass.
    pub fn linear_momentum(&self) -> Vec3 {
        (0..self.particle_count())
            .map(|i| self.velocities[i] * self.particle_mass(i))
            .sum()
    }

    pub fn total_mass(&self) -> f64 {
        (0..self.particle_count()).map(|i| self.particle_mass(i)).sum()
    }

    pub fn max_stretch_residual(&self) -> f64 {
        (0..self.segment_count())
            .map(|s| {
                eval_stretch_shear(
                    &self.positions[s],
                    &self.positions[s + 1],
                    self.rest_lengths[s],
                    &self.orientations[s],
                )
                .norm()
            })
            .fold(0.0, f64::max)
    }

    pub fn max_bend_residual(&self) -> f64 {
        (0..self.rest_darboux.len())
            .map(|j| {
                eval_bend_twist(
                    &self.orientations[j],
                    &self.orientations[j + 1],
                    &self.rest_darboux[j],
                )
                .norm()
            })
            .fold(0.0, f64::max)
    }

    /// Checks the structural invariants.
    pub fn validate(&self) -> Result<(), SimError> {
        let p = self.positions.len();
        if p < 2 {
            return Err(SimError::InvalidGeometry("rod needs at least 2 particles".into()));
        }
        let counts_ok = self.velocities.len() == p
            && self.inverse_masses.len() == p
            && self.orientations.len() == p - 1
            && self.angular_velocities.len() == p - 1
            && self.rest_lengths.len() == p - 1
            && self.inverse_inertias.len() == p - 1
            && self.rest_darboux.len() == p - 2;
        if !counts_ok {
            return Err(SimError::InvalidGeometry("inconsistent array lengths".into()));
        }
        if self.rest_lengths.iter().any(|&l| !(l > 0.0)) {
            return Err(SimError::InvalidGeometry("rest lengths must be > 0".into()));
        }
        if self.inverse_masses.iter().any(|&w| !(w >= 0.0)) {
            return Err(SimError::InvalidGeometry("inverse masses must be >= 0".into()));
        }
        Ok(())
    }
}

/// Builds a rod at rest along `centerline`.
pub fn init_rod(
    centerline: &[Vec3],
    material: &RodMaterial,
    config: &SimConfig,
) -> Result<RodState, SimError> {
    material.validate()?;
    config.validate()?;
    if centerline.len() < 2 {
        return Err(SimError::InvalidGeometry(format!(
            "centerline has {} points, need at least 2",
            centerline.len()
        )));
    }
    if let Some(bad) = centerline.iter().position(|p| !crate::math::all_finite(p)) {
        return Err(SimError::NumericInput(format!("centerline point {bad} is not finite")));
    }
    let mut rest_lengths = Vec::with_capacity(centerline.len() - 1);
    let mut orientations = Vec::with_capacity(centerline.len() - 1);
    for (i, w) in centerline.windows(2).enumerate() {
        let d = w[1] - w[0];
        let l = d.norm();
        if !(l > 0.0) {
            return Err(SimError::InvalidGeometry(format!(
                "points {i} and {} coincide",
                i + 1
            )));
        }
        rest_lengths.push(l);
        orientations.push(rotation_from_z(&(d / l)));
    }
    let rest_darboux = orientations
        .windows(2)
        .map(|w| canonical(w[0].conjugate() * w[1]))
        .collect();

    let p = centerline.len();
    let rho = material.linear_density;
    let inverse_masses = (0..p)
        .map(|i| {
            let left = if i > 0 { rest_lengths[i - 1] } else { 0.0 };
            let right = if i < p - 1 { rest_lengths[i] } else { 0.0 };
            1.0 / (rho * 0.5 * (left + right))
        })
        .collect();
    let r2 = material.radius * material.radius;
    let inverse_inertias = rest_lengths
        .iter()
        .map(|&l| {
            // solid cylinder about a transverse axis
            let m = rho * l;
            1.0 / (m * (r2 / 4.0 + l * l / 12.0))
        })
        .collect();

    Ok(RodState {
        positions: centerline.to_vec(),
        velocities: vec![Vec3::zeros(); p],
        orientations,
        angular_velocities: vec![Vec3::zeros(); p - 1],
        rest_lengths,
        rest_darboux,
        inverse_masses,
        inverse_inertias,
        frame: 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Left,
    Right,
}

/// Kinematic end effector.
#[derive(Debug, Clone, PartialEq)]
pub struct GripperState {
    pub position: Vec3,
    pub orientation: Quat,
    /// 1 fully open, 0 closed.
    pub openness: f64,
    pub attachment: Option<Attachment>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Attachment {
    pub particle: usize,
    /// Grasp point in the gripper frame.
    pub offset: Vec3,
}

impl GripperState {
    pub fn new(position: Vec3, orientation: Quat, openness: f64) -> Self {
        Self {
            position,
            orientation,
            openness: openness.clamp(0.0, 1.0),
            attachment: None,
        }
    }

    /// Open gripper well away from the workspace.
    pub fn parked(side: Arm) -> Self {
        let y = match side {
            Arm::Left => 0.5,
            Arm::Right => -0.5,
        };
        Self::new(Vec3::new(0.0, y, 1.0), Quat::identity(), 1.0)
    }

    pub fn grasp_point(&self) -> Option<(usize, Vec3)> {
        self.attachment
            .map(|a| (a.particle, self.position + self.orientation * a.offset))
    }

    pub fn validate(&self, particle_count: usize) -> Result<(), SimError> {
        if !crate::math::all_finite(&self.position)
            || !self.orientation.coords.iter().all(|c| c.is_finite())
            || !self.openness.is_finite()
        {
            return Err(SimError::NumericInput("gripper state is not finite".into()));
        }
        if !(0.0..=1.0).contains(&self.openness) {
            return Err(SimError::InvalidParameter("openness outside [0, 1]".into()));
        }
        if let Some(a) = self.attachment {
            if a.particle >= particle_count {
                return Err(SimError::InvalidParameter(format!(
                    "attachment index {} out of range",
                    a.particle
                )));
            }
        }
        Ok(())
    }
}
