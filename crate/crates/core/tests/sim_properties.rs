use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ropetwin::math::{Quat, Vec3};
use ropetwin::sim::{
    closest_points_segments, init_rod, segment_contact_pairs, step_frame, xpbd_project, Arm, Constraint, GripperState, ProjectionContext, RodMaterial, SolverKind, RodState,
    SimConfig, Simulation,
};

fn straight(n: usize, len: f64, z: f64) -> Vec<Vec3> {
    (0..n).map(|i| Vec3::new(len * i as f64 / (n - 1) as f64, 0.0, z)).collect()
}

fn parked() -> [GripperState; 2] {
    [GripperState::parked(Arm::Left), GripperState::parked(Arm::Right)]
}

fn perturbed_rod(seed: u64, material: &RodMaterial) -> RodState {
    let mut rod = init_rod(&straight(100, 1.0, 0.5), material, &SimConfig::default()).unwrap();
    let seg = 1.0 / 99.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in rod.positions.iter_mut() {
        let dir = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        *p += dir.normalize() * rng.gen_range(0.0..0.1 * seg);
    }
    rod
}

fn relax(rod: &mut RodState, material: &RodMaterial, iterations: usize, dt: f64) {
    let mut cs: Vec<Constraint> = (0..rod.segment_count()).map(|segment| Constraint::StretchShear { segment }).collect();
    cs.extend((0..rod.rest_darboux.len()).map(|joint| Constraint::BendTwist { joint }));
    let mut lambdas = vec![Vec3::zeros(); cs.len()];
    let start = rod.positions.clone();
    let ctx = ProjectionContext {
        stretch_shear_compliance: material.stretch_shear_compliance,
        bend_twist_compliance: material.bend_twist_compliance,
        radius: material.radius,
        ground_height: 0.0,
        ground_friction: 0.0,
        self_friction: 0.0,
        start_positions: &start,
        solver: SolverKind::Direct,
    };
    for _ in 0..iterations {
        xpbd_project(&cs, &mut lambdas, rod, &ctx, dt);
    }
}

#[test]
fn perturbed_rope_converges_with_zero_compliance() {
    let material = RodMaterial { stretch_shear_compliance: 0.0, ..Default::default() };
    for seed in 0..5 {
        let mut rod = perturbed_rod(seed, &material);
        assert!(rod.max_stretch_residual() > 1e-3);
        relax(&mut rod, &material, 50, 1.0 / 600.0);
        let r = rod.max_stretch_residual();
        assert!(r < 1e-6, "seed {seed}: residual {r:e}");
    }
}

#[test]
fn pinned_ends_sag_symmetrically() {
    let material = RodMaterial::default();
    let config = SimConfig { ground: false, ..Default::default() };
    let mut sim = Simulation::new(&straight(101, 1.0, 1.0), material, config).unwrap();
    // ends 0.8 m apart with a small downward bias so the slack hangs
    for p in sim.state.positions.iter_mut() {
        let u = p.x;
        *p = Vec3::new(0.1 + 0.8 * u, 0.0, 1.0 - 0.05 * (1.0 - (2.0 * u - 1.0).powi(2)));
    }
    sim.state.inverse_masses[0] = 0.0;
    sim.state.inverse_masses[100] = 0.0;
    for _ in 0..300 {
        sim.step_idle().unwrap();
    }
    let p = &sim.state.positions;
    for i in 0..=50 {
        let (a, b) = (p[i], p[100 - i]);
        assert!((a.z - b.z).abs() < 1e-3, "z asymmetry at {i}");
        assert!(((a.x - 0.5) + (b.x - 0.5)).abs() < 1e-3, "x asymmetry at {i}");
    }
    let lowest = (0..=100).min_by(|&a, &b| p[a].z.total_cmp(&p[b].z)).unwrap();
    assert!((p[lowest].z - p[50].z).abs() < 1e-6, "lowest particle {lowest}");
    assert!(p[50].z < 0.85, "midpoint at {}", p[50].z);
}

#[test]
fn grasp_and_pull_keeps_length() {
    let material = RodMaterial::default();
    let config = SimConfig::default();
    let mut sim = Simulation::new(&straight(100, 1.0, 0.005), material, config).unwrap();
    let rest = sim.state.rest_length_total();
    let mut left = GripperState::new(sim.state.positions[0], Quat::identity(), 0.0);
    let right = GripperState::parked(Arm::Right);
    sim.place_grippers(&left, &right);
    for f in 0..150 {
        let t = f as f64 / 30.0;
        // lift, then drag sideways and back at up to 0.5 m/s
        left.position = Vec3::new(-0.3 * (t / 5.0), 0.25 * (t * 1.3).sin(), 0.005 + 0.15 * (t / 2.0).min(1.0));
        sim.step(&left, &right).unwrap();
        let err = (sim.state.arc_length() - rest).abs() / rest;
        assert!(err < 0.01, "frame {f}: length error {err}");
    }
}

#[test]
fn quaternions_stay_unit() {
    let material = RodMaterial::default();
    let config = SimConfig::default();
    let pts: Vec<Vec3> = (0..100).map(|i| {
        let a = i as f64 * 0.08;
        Vec3::new(0.15 * a.cos(), 0.15 * a.sin(), 0.05 + 0.002 * i as f64)
    }).collect();
    let mut sim = Simulation::new(&pts, material, config).unwrap();
    for _ in 0..120 {
        sim.step_idle().unwrap();
        for q in &sim.state.orientations {
            assert!((q.coords.norm() - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn internal_constraints_conserve_momentum() {
    let material = RodMaterial { damping: 0.0, ..Default::default() };
    let config = SimConfig { gravity: [0.0; 3], ground: false, self_collision: false, ..Default::default() };
    let mut rod = perturbed_rod(7, &material);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for v in rod.velocities.iter_mut() {
        *v = Vec3::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1));
    }
    let mut state = rod;
    for _ in 0..10 {
        let before = state.linear_momentum();
        state = step_frame(&state, &parked(), &parked(), &material, &config).unwrap().state;
        let after = state.linear_momentum();
        assert!((after - before).amax() < 1e-9, "{:e}", (after - before).amax());
    }
}

#[test]
fn stepping_is_bit_deterministic() {
    let material = RodMaterial::default();
    let config = SimConfig::default();
    let rod = perturbed_rod(3, &material);
    let run = || {
        let mut s = rod.clone();
        for _ in 0..20 {
            s = step_frame(&s, &parked(), &parked(), &material, &config).unwrap().state;
        }
        s
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn translation_equivariance(tx in -2.0..2.0f64, ty in -2.0..2.0f64, tz in -2.0..2.0f64) {
        let material = RodMaterial::default();
        let config = SimConfig { gravity: [0.0; 3], ground: false, ..Default::default() };
        let t = Vec3::new(tx, ty, tz);
        let pts: Vec<Vec3> = (0..40).map(|i| {
            let a = i as f64 * 0.15;
            Vec3::new(0.1 * a.cos(), 0.1 * a.sin(), 0.003 * i as f64)
        }).collect();
        let moved: Vec<Vec3> = pts.iter().map(|p| p + t).collect();
        let mut a = Simulation::new(&pts, material, config).unwrap();
        let mut b = Simulation::new(&moved, material, config).unwrap();
        let mut ga = GripperState::new(pts[0], Quat::identity(), 0.0);
        let mut gb = GripperState::new(moved[0], Quat::identity(), 0.0);
        let park = GripperState::parked(Arm::Right);
        let mut park_b = park.clone();
        park_b.position += t;
        a.place_grippers(&ga, &park);
        b.place_grippers(&gb, &park_b);
        for _ in 0..15 {
            ga.position += Vec3::new(0.005, 0.002, 0.004);
            gb.position += Vec3::new(0.005, 0.002, 0.004);
            a.step(&ga, &park).unwrap();
            b.step(&gb, &park_b).unwrap();
        }
        for (p, q) in a.state.positions.iter().zip(&b.state.positions) {
            prop_assert!(((q - p) - t).amax() < 1e-9);
        }
    }

    #[test]
    fn contact_pairs_match_brute_force(steps in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -0.3f64..0.3), 60)) {
        let mut p = Vec3::zeros();
        let pts: Vec<Vec3> = steps.iter().map(|&(x, y, z)| {
            p += Vec3::new(x, y, z) * 0.01;
            p
        }).collect();
        let (radius, margin) = (0.005, 0.002);
        let mut brute = Vec::new();
        for a in 0..pts.len() - 1 {
            for b in a + 3..pts.len() - 1 {
                let (_, _, ca, cb) = closest_points_segments(&pts[a], &pts[a + 1], &pts[b], &pts[b + 1]);
                if (ca - cb).norm() < 2.0 * radius + margin {
                    brute.push((a, b));
                }
            }
        }
        prop_assert_eq!(segment_contact_pairs(&pts, radius, margin), brute);
    }
}
