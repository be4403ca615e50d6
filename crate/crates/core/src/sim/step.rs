use super::collision::collision_constraints;
use super::constraints::{project_with, Constraint, ProjectStats, ProjectionContext};
use super::direct::RodSolver;
use super::grasp::update_grasp;
use super::{GripperState, RodMaterial, RodState, SimConfig, SimError, DIVERGENCE_LIMIT};
use crate::math::{all_finite, rotate_by, slerp_shortest, Vec3};
use nalgebra::{Quaternion, UnitQuaternion};
use serde::Serialize;

/// Per-frame solver record, reported by `simbench`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct FrameDiagnostics {
    pub frame: u64,
    pub max_stretch_residual: f64,
    pub max_bend_residual: f64,
    pub stretch_constraints: usize,
    pub bend_constraints: usize,
    pub attachments: usize,
    /// Self-contact candidate pairs summed over substeps.
    pub contact_pairs: usize,
    /// Active ground/self contacts summed over all sweeps.
    pub active_contacts: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput {
    pub state: RodState,
    pub grippers: [GripperState; 2],
    pub diagnostics: FrameDiagnostics,
}

fn check_finite(state: &RodState, grippers: &[&GripperState]) -> Result<(), SimError> {
    let bad = state.positions.iter().chain(&state.velocities).chain(&state.angular_velocities).any(|v| !all_finite(v))
        || state.orientations.iter().any(|q| !q.coords.iter().all(|c| c.is_finite()));
    if bad {
        return Err(SimError::NumericInput("rod state contains non-finite values".into()));
    }
    for g in grippers {
        g.validate(state.particle_count())?;
    }
    Ok(())
}

/// Advances the rod by one frame (`config.frame_dt`).
///
/// `grippers` are the poses at the start of the frame, including any current
/// attachment; `targets` are the commanded poses at the end of the frame.
/// Grasp transitions use the commanded openness at the start pose. The
/// grippers move linearly (slerp for orientation) across the substeps, and
/// their poses at the end of the frame equal the targets.
pub fn step_frame(
    state: &RodState,
    grippers: &[GripperState; 2],
    targets: &[GripperState; 2],
    material: &RodMaterial,
    config: &SimConfig,
) -> Result<FrameOutput, SimError> {
    material.validate()?;
    config.validate()?;
    state.validate()?;
    check_finite(state, &[&grippers[0], &grippers[1], &targets[0], &targets[1]])?;

    let starts: [GripperState; 2] = [0, 1].map(|k| {
        let mut g = grippers[k].clone();
        g.openness = targets[k].openness;
        update_grasp(state, &g, config)
    });

    let mut s = state.clone();
    let n_sub = config.substeps;
    let dt = config.dt_sub();
    let gravity = config.gravity();
    let decay = (-material.damping * dt).exp();
    let p_count = s.particle_count();
    let seg_count = s.segment_count();

    let mut diag = FrameDiagnostics {
        frame: state.frame + 1,
        stretch_constraints: seg_count,
        bend_constraints: s.rest_darboux.len(),
        ..Default::default()
    };
    let mut stats = ProjectStats::default();
    let mut constraints: Vec<Constraint> = Vec::with_capacity(3 * p_count);
    let mut lambdas: Vec<Vec3> = Vec::new();
    let mut solver = RodSolver::new();

    for sub in 1..=n_sub {
        let frac = sub as f64 / n_sub as f64;
        let start_positions = s.positions.clone();
        let start_orientations = s.orientations.clone();

        // predict
        for i in 0..p_count {
            if s.inverse_masses[i] > 0.0 {
                s.velocities[i] = (s.velocities[i] + gravity * dt) * decay;
                s.positions[i] += s.velocities[i] * dt;
            } else {
                s.velocities[i] = Vec3::zeros();
            }
        }
        for k in 0..seg_count {
            if s.inverse_inertias[k] > 0.0 {
                s.angular_velocities[k] *= decay;
                s.orientations[k] = rotate_by(&s.orientations[k], &(s.angular_velocities[k] * dt));
            } else {
                s.angular_velocities[k] = Vec3::zeros();
            }
        }

        constraints.clear();
        constraints.extend((0..seg_count).map(|segment| Constraint::StretchShear { segment }));
        constraints.extend((0..s.rest_darboux.len()).map(|joint| Constraint::BendTwist { joint }));
        for k in 0..2 {
            if let Some(a) = starts[k].attachment {
                let pos = starts[k].position.lerp(&targets[k].position, frac);
                let rot = slerp_shortest(&starts[k].orientation, &targets[k].orientation, frac);
                constraints.push(Constraint::Attachment { particle: a.particle, target: pos + rot * a.offset });
                diag.attachments = diag.attachments.max(k + 1);
            }
        }
        let before_collisions = constraints.len();
        collision_constraints(&s, material, config, &mut constraints);
        diag.contact_pairs += constraints[before_collisions..]
            .iter()
            .filter(|c| matches!(c, Constraint::SelfContact { .. }))
            .count();
        lambdas.clear();
        lambdas.resize(constraints.len(), Vec3::zeros());

        let ctx = ProjectionContext {
            stretch_shear_compliance: material.stretch_shear_compliance,
            bend_twist_compliance: material.bend_twist_compliance,
            radius: material.radius,
            ground_height: config.ground_height,
            ground_friction: material.ground_friction,
            self_friction: material.self_friction,
            start_positions: &start_positions,
            solver: config.solver,
        };
        for _ in 0..config.iterations {
            stats += project_with(&constraints, &mut lambdas, &mut s, &ctx, dt, &mut solver);
        }

        // velocities from the position change
        for i in 0..p_count {
            if s.inverse_masses[i] > 0.0 {
                s.velocities[i] = (s.positions[i] - start_positions[i]) / dt;
            }
        }
        for k in 0..seg_count {
            let q = UnitQuaternion::new_normalize(s.orientations[k].into_inner());
            s.orientations[k] = q;
            if s.inverse_inertias[k] > 0.0 {
                let mut rel: Quaternion<f64> = q.into_inner() * start_orientations[k].conjugate().into_inner();
                if rel.w < 0.0 {
                    rel = -rel;
                }
                s.angular_velocities[k] = rel.imag() * (2.0 / dt);
            }
        }
    }

    s.frame = state.frame + 1;
    let limit_hit = s
        .positions
        .iter()
        .any(|p| !all_finite(p) || p.amax() > DIVERGENCE_LIMIT);
    if limit_hit {
        return Err(SimError::Divergence { frame: s.frame, limit: DIVERGENCE_LIMIT });
    }

    diag.attachments = starts.iter().filter(|g| g.attachment.is_some()).count();
    diag.active_contacts = stats.active_contacts;
    diag.skipped = stats.skipped;
    diag.max_stretch_residual = s.max_stretch_residual();
    diag.max_bend_residual = s.max_bend_residual();

    let grippers_out = [0, 1].map(|k| GripperState {
        position: targets[k].position,
        orientation: targets[k].orientation,
        openness: targets[k].openness,
        attachment: starts[k].attachment,
    });
    Ok(FrameOutput { state: s, grippers: grippers_out, diagnostics: diag })
}

/// Owns a rod, its grippers, and the parameters; steps frame by frame.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub state: RodState,
    pub grippers: [GripperState; 2],
    pub material: RodMaterial,
    pub config: SimConfig,
    pub last_diagnostics: FrameDiagnostics,
}

impl Simulation {
    pub fn new(centerline: &[Vec3], material: RodMaterial, config: SimConfig) -> Result<Self, SimError> {
        let state = super::init_rod(centerline, &material, &config)?;
        Ok(Self::from_state(state, material, config))
    }

    pub fn from_state(state: RodState, material: RodMaterial, config: SimConfig) -> Self {
        use crate::sim::Arm;
        Self {
            state,
            grippers: [GripperState::parked(Arm::Left), GripperState::parked(Arm::Right)],
            material,
            config,
            last_diagnostics: FrameDiagnostics::default(),
        }
    }

    pub fn time(&self) -> f64 {
        self.state.frame as f64 * self.config.frame_dt
    }

    pub fn step(&mut self, left: &GripperState, right: &GripperState) -> Result<&FrameDiagnostics, SimError> {
        let out = step_frame(&self.state, &self.grippers, &[left.clone(), right.clone()], &self.material, &self.config)?;
        self.state = out.state;
        self.grippers = out.grippers;
        self.last_diagnostics = out.diagnostics;
        Ok(&self.last_diagnostics)
    }

    /// Steps with the grippers held at their current poses.
    pub fn step_idle(&mut self) -> Result<&FrameDiagnostics, SimError> {
        let [l, r] = self.grippers.clone();
        self.step(&l, &r)
    }

    /// Places both grippers without stepping, then evaluates grasping.
    pub fn place_grippers(&mut self, left: &GripperState, right: &GripperState) {
        for (slot, target) in self.grippers.iter_mut().zip([left, right]) {
            let mut g = target.clone();
            g.attachment = slot.attachment;
            *slot = update_grasp(&self.state, &g, &self.config);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Quat;
    use crate::sim::init_rod;
    use crate::sim::Arm;

    fn parked() -> [GripperState; 2] {
        [GripperState::parked(Arm::Left), GripperState::parked(Arm::Right)]
    }

    fn straight(n: usize, len: f64, z: f64) -> Vec<Vec3> {
        (0..n).map(|i| Vec3::new(len * i as f64 / (n - 1) as f64, 0.0, z)).collect()
    }

    #[test]
    fn rest_is_a_fixed_point() {
        let material = RodMaterial::default();
        let config = SimConfig { gravity: [0.0; 3], ..Default::default() };
        let rod = init_rod(&straight(100, 1.0, 0.3), &material, &config).unwrap();
        let out = step_frame(&rod, &parked(), &parked(), &material, &config).unwrap();
        for (a, b) in out.state.positions.iter().zip(&rod.positions) {
            assert!((a - b).amax() < 1e-9);
        }
        for (a, b) in out.state.orientations.iter().zip(&rod.orientations) {
            assert!((a.coords - b.coords).amax() < 1e-9);
        }
    }

    #[test]
    fn gravity_changes_momentum_by_exactly_g_dt() {
        let material = RodMaterial { damping: 0.0, ..Default::default() };
        let config = SimConfig { ground: false, ..Default::default() };
        // a curved rope so that internal constraints are active
        let pts: Vec<Vec3> = (0..100)
            .map(|i| {
                let a = i as f64 * 0.05;
                Vec3::new(0.2 * a.cos(), 0.2 * a.sin(), 0.01 * a)
            })
            .collect();
        let rod = init_rod(&pts, &material, &config).unwrap();
        let out = step_frame(&rod, &parked(), &parked(), &material, &config).unwrap();
        let m = rod.total_mass();
        let dv = (out.state.linear_momentum() - rod.linear_momentum()) / m;
        assert!((dv - Vec3::new(0.0, 0.0, -9.81 / 30.0)).amax() < 1e-12, "{dv:?}");
    }

    #[test]
    fn rejects_non_finite_input() {
        let material = RodMaterial::default();
        let config = SimConfig::default();
        let mut rod = init_rod(&straight(10, 0.5, 0.1), &material, &config).unwrap();
        rod.positions[3].x = f64::NAN;
        let err = step_frame(&rod, &parked(), &parked(), &material, &config).unwrap_err();
        assert!(matches!(err, SimError::NumericInput(_)));
    }

    #[test]
    fn divergence_reports_frame() {
        let material = RodMaterial::default();
        let config = SimConfig { ground: false, ..Default::default() };
        let mut rod = init_rod(&straight(10, 0.5, 0.1), &material, &config).unwrap();
        rod.frame = 41;
        for v in rod.velocities.iter_mut() {
            *v = Vec3::new(1e6, 0.0, 0.0);
        }
        let err = step_frame(&rod, &parked(), &parked(), &material, &config).unwrap_err();
        assert_eq!(err, SimError::Divergence { frame: 42, limit: DIVERGENCE_LIMIT });
    }

    #[test]
    fn gripper_pose_follows_target_and_carries_particle() {
        let material = RodMaterial::default();
        let config = SimConfig::default();
        let mut sim = Simulation::new(&straight(100, 1.0, 0.005), material, config).unwrap();
        let start = sim.state.positions[0];
        let mut left = GripperState::new(start, Quat::identity(), 0.0);
        sim.place_grippers(&left, &GripperState::parked(Arm::Right));
        assert_eq!(sim.grippers[0].attachment.unwrap().particle, 0);
        for _ in 0..30 {
            left.position.z += 0.1 / 30.0;
            sim.step(&left, &GripperState::parked(Arm::Right)).unwrap();
        }
        assert_eq!(sim.grippers[0].position, left.position);
        assert!((sim.state.positions[0] - left.position).norm() < 1e-9);
    }
}
