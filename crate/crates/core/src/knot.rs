//! Loose overhand-knot fixtures: an open trefoil-like curve with two tails,
//! randomly placed on the table and settled under gravity in the simulator.

use crate::extract::resample_polyline;
use crate::math::{Quat, Vec2, Vec3};
use crate::metrics::polyline_crossings;
use crate::playback::{ArmCommand, DemoFrame, DemoMeta, Demonstration, SIM_RATE_HZ};
use crate::sim::{init_rod, Arm, GripperState, RodMaterial, SimConfig, SimError, Simulation};
use crate::state::{ParticleState, PARTICLE_COUNT};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{PI, TAU};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnotShape {
    /// Meters per unit of the trefoil parameterization (lobe radius is 3).
    pub scale: f64,
    /// Vertical amplitude of the crossing pattern (m).
    pub lift: f64,
    /// Parameter gap left open at the lobe tip where the curve is cut.
    pub gap: f64,
    pub lead_tail: f64,
    pub end_tail: f64,
    /// Rotation about +z (rad).
    pub heading: f64,
    pub offset: Vec2,
}

impl KnotShape {
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            scale: rng.gen_range(0.028..0.034),
            lift: 0.02,
            gap: rng.gen_range(0.22..0.3),
            lead_tail: rng.gen_range(0.14..0.2),
            end_tail: rng.gen_range(0.1..0.14),
            heading: rng.gen_range(0.0..TAU),
            offset: Vec2::new(rng.gen_range(-0.03..0.03), rng.gen_range(-0.03..0.03)),
        }
    }
}

fn trefoil(t: f64) -> (Vec2, Vec2, f64) {
    let p = Vec2::new(t.sin() + 2.0 * (2.0 * t).sin(), t.cos() - 2.0 * (2.0 * t).cos());
    let d = Vec2::new(t.cos() + 4.0 * (2.0 * t).cos(), -t.sin() + 4.0 * (2.0 * t).sin());
    (p, d, -(3.0 * t).sin())
}

/// Dense polyline of the knot before simulation, lowest point one radius
/// plus `clearance` above the table at `table_height`.
pub fn overhand_polyline(shape: &KnotShape, radius: f64, table_height: f64, clearance: f64) -> Vec<Vec3> {
    // cut at the tip of a lobe so the two tails leave the knot in diverging
    // directions
    let tip = PI / 3.0;
    let (a, b) = (tip + shape.gap, tip + TAU - shape.gap);
    let dense = 600;
    let mut pts = Vec::new();

    // both tails leave radially, splayed apart so they cannot cross
    let (pa, _, za) = trefoil(a);
    let (pb, _, zb) = trefoil(b);
    let apart = (pa - pb).normalize();
    let ld = (pa.normalize() + apart * 0.8).normalize();
    let ed = (pb.normalize() - apart * 0.8).normalize();
    let lead_n = 60;
    for k in (1..=lead_n).rev() {
        let u = shape.lead_tail * k as f64 / lead_n as f64 / shape.scale;
        let q = pa + ld * u;
        pts.push(Vec3::new(q.x, q.y, za));
    }
    for k in 0..=dense {
        let t = a + (b - a) * k as f64 / dense as f64;
        let (p, _, z) = trefoil(t);
        pts.push(Vec3::new(p.x, p.y, z));
    }
    let end_n = 40;
    for k in 1..=end_n {
        let u = shape.end_tail * k as f64 / end_n as f64 / shape.scale;
        let q = pb + ed * u;
        pts.push(Vec3::new(q.x, q.y, zb));
    }

    let (c, s) = (shape.heading.cos(), shape.heading.sin());
    let mut out: Vec<Vec3> = pts
        .into_iter()
        .map(|p| {
            let x = p.x * shape.scale;
            let y = p.y * shape.scale;
            Vec3::new(c * x - s * y + shape.offset.x, s * x + c * y + shape.offset.y, p.z * shape.lift)
        })
        .collect();
    let zmin = out.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
    for p in &mut out {
        p.z += table_height + radius + clearance - zmin;
    }
    out
}

/// Settling time used for fixtures (s).
pub const SETTLE_SECONDS: f64 = 2.0;

/// Knot resampled to [`PARTICLE_COUNT`] particles and settled for
/// [`SETTLE_SECONDS`] with both grippers parked.
pub fn settled_overhand(shape: &KnotShape, material: &RodMaterial, config: &SimConfig) -> Result<Simulation, SimError> {
    let dense = overhand_polyline(shape, material.radius, config.ground_height, 0.002);
    let points = resample_polyline(&dense, PARTICLE_COUNT).map_err(|e| SimError::InvalidGeometry(e.to_string()))?;
    let state = init_rod(&points, material, config)?;
    let mut sim = Simulation::from_state(state, *material, *config);
    let (left, right) = (GripperState::parked(Arm::Left), GripperState::parked(Arm::Right));
    sim.place_grippers(&left, &right);
    let frames = (SETTLE_SECONDS / config.frame_dt).round() as usize;
    for _ in 0..frames {
        sim.step(&left, &right)?;
    }
    Ok(sim)
}

pub fn settled_overhand_state(seed: u64) -> Result<ParticleState, SimError> {
    let sim = settled_overhand(&KnotShape::random(seed), &RodMaterial::default(), &SimConfig::default())?;
    ParticleState::new(sim.state.positions.clone()).map_err(|e| SimError::InvalidGeometry(e.to_string()))
}

/// Particle the right arm holds still during [`untangle_demo`].
pub const UNTANGLE_ANCHOR: usize = 5;

/// Two-arm untangling script at 30 Hz, planned from the initial state only.
///
/// The right arm pins [`UNTANGLE_ANCHOR`]. The left arm grasps the rope
/// midway between the last two crossings, lifts it 10 cm, carries it straight
/// away from the anchor until that stretch of rope is nearly taut, sets it
/// down, eases off and lets go. Both arms then stay open for three seconds
/// so the final frame shows the rope at rest. `None` when the state has
/// fewer than two crossings.
pub fn untangle_demo(state: &ParticleState, rope_id: &str) -> Option<Demonstration> {
    const SPEED: f64 = 0.25;
    const LIFT: f64 = 0.1;
    const TAUT: f64 = 0.97;
    const SLACK: f64 = 0.05;
    let p = state.points();
    let mut b: Vec<usize> = polyline_crossings(p).iter().map(|c| c.seg_b).collect();
    if b.len() < 2 {
        return None;
    }
    b.sort_unstable();
    let g = (b[b.len() - 2] + b[b.len() - 1]).div_ceil(2);
    let anchor = p[UNTANGLE_ANCHOR];
    let arc: f64 = p[UNTANGLE_ANCHOR..=g].windows(2).map(|w| (w[1] - w[0]).norm()).sum();
    let dir = Vec3::new(p[g].x - anchor.x, p[g].y - anchor.y, 0.0).normalize();
    let target = anchor + dir * (TAUT * arc);
    let up = Vec3::new(0.0, 0.0, LIFT);

    let mut script = Script { frames: Vec::new(), left: p[g], left_open: 1.0, right_open: 1.0 };
    script.ramp(1, 1.0, 1.0);
    script.ramp(9, 0.0, 0.0);
    script.move_to(p[g] + up, SPEED);
    script.move_to(Vec3::new(target.x, target.y, p[g].z) + up, SPEED);
    script.move_to(Vec3::new(target.x, target.y, p[g].z), SPEED);
    script.move_to(Vec3::new(target.x, target.y, p[g].z) - dir * SLACK, 0.05);
    script.ramp(9, 1.0, 0.0);
    script.ramp(1, 1.0, 1.0);
    script.ramp(90, 1.0, 1.0);

    let dt = 1.0 / SIM_RATE_HZ;
    let quat = Quat::identity();
    let frames = script
        .frames
        .into_iter()
        .enumerate()
        .map(|(i, (left, lo, ro))| DemoFrame {
            t: i as f64 * dt,
            left: ArmCommand { pos: left, quat, open: lo },
            right: ArmCommand { pos: anchor, quat, open: ro },
        })
        .collect();
    Some(Demonstration {
        meta: DemoMeta { rope_id: rope_id.to_string(), rate_hz: SIM_RATE_HZ },
        frames,
    })
}

struct Script {
    frames: Vec<(Vec3, f64, f64)>,
    left: Vec3,
    left_open: f64,
    right_open: f64,
}

impl Script {
    /// Holds the left gripper still while both openings move linearly.
    fn ramp(&mut self, n: usize, left_open: f64, right_open: f64) {
        let (l0, r0) = (self.left_open, self.right_open);
        for i in 1..=n {
            let s = i as f64 / n as f64;
            self.frames.push((self.left, l0 + (left_open - l0) * s, r0 + (right_open - r0) * s));
        }
        self.left_open = left_open;
        self.right_open = right_open;
    }

    fn move_to(&mut self, to: Vec3, speed: f64) {
        let from = self.left;
        let n = ((to - from).norm() / speed * SIM_RATE_HZ).ceil().max(1.0) as usize;
        for i in 1..=n {
            self.frames.push((from + (to - from) * (i as f64 / n as f64), self.left_open, self.right_open));
        }
        self.left = to;
    }
}
