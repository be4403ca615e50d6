use super::{Attachment, GripperState, RodState, SimConfig};

/// Grasp state machine with hysteresis: closing below
/// `grasp_close_threshold` attaches the nearest particle within
/// `grasp_radius` (lowest index on ties); opening above
/// `grasp_open_threshold` releases.
pub fn update_grasp(state: &RodState, gripper: &GripperState, config: &SimConfig) -> GripperState {
    let mut out = gripper.clone();
    match gripper.attachment {
        Some(_) if gripper.openness > config.grasp_open_threshold => out.attachment = None,
        None if gripper.openness < config.grasp_close_threshold => {
            let mut best: Option<(usize, f64)> = None;
            for (i, p) in state.positions.iter().enumerate() {
                let d = (p - gripper.position).norm();
                if d <= config.grasp_radius && best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((i, d));
                }
            }
            if let Some((particle, _)) = best {
                let offset = gripper.orientation.inverse() * (state.positions[particle] - gripper.position);
                out.attachment = Some(Attachment { particle, offset });
            }
        }
        _ => {}
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{Quat, Vec3};
    use crate::sim::{init_rod, RodMaterial};

    fn rod() -> RodState {
        let pts: Vec<Vec3> = (0..100).map(|i| Vec3::new(i as f64 * 0.01, 0.0, 0.005)).collect();
        init_rod(&pts, &RodMaterial::default(), &SimConfig::default()).unwrap()
    }

    #[test]
    fn attaches_nearest_particle_in_range() {
        let rod = rod();
        let cfg = SimConfig::default();
        let mut g = GripperState::new(Vec3::new(0.42, 0.0, 0.010), Quat::identity(), 1.0);
        g = update_grasp(&rod, &g, &cfg);
        assert!(g.attachment.is_none());
        g.openness = 0.1;
        g = update_grasp(&rod, &g, &cfg);
        let a = g.attachment.expect("attached");
        assert_eq!(a.particle, 42);
        assert!((g.grasp_point().unwrap().1 - rod.positions[42]).norm() < 1e-15);
    }

    #[test]
    fn nothing_in_range_means_no_attachment() {
        let rod = rod();
        let g = GripperState::new(Vec3::new(0.5, 0.5, 0.5), Quat::identity(), 0.0);
        assert!(update_grasp(&rod, &g, &SimConfig::default()).attachment.is_none());
    }

    #[test]
    fn equidistant_tie_picks_lower_index() {
        let pts: Vec<Vec3> = (0..20).map(|i| Vec3::new(i as f64 * 0.25, 0.0, 0.0)).collect();
        let rod = init_rod(&pts, &RodMaterial::default(), &SimConfig::default()).unwrap();
        let g = GripperState::new(Vec3::new(2.625, 0.0, 0.0), Quat::identity(), 0.0);
        let cfg = SimConfig { grasp_radius: 0.2, ..Default::default() };
        assert_eq!(update_grasp(&rod, &g, &cfg).attachment.unwrap().particle, 10);
    }

    #[test]
    fn hysteresis_band_holds_state() {
        let rod = rod();
        let cfg = SimConfig::default();
        let mut g = GripperState::new(rod.positions[5], Quat::identity(), 0.0);
        g = update_grasp(&rod, &g, &cfg);
        assert!(g.attachment.is_some());
        // between thresholds: still attached
        g.openness = 0.4;
        g = update_grasp(&rod, &g, &cfg);
        assert!(g.attachment.is_some());
        g.openness = 0.6;
        g = update_grasp(&rod, &g, &cfg);
        assert!(g.attachment.is_none());
        // between thresholds again: stays open
        g.openness = 0.4;
        g = update_grasp(&rod, &g, &cfg);
        assert!(g.attachment.is_none());
    }
}
