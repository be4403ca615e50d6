use super::constraints::{xpbd_project, Constraint, ProjectionContext};
use super::{RodMaterial, RodState, SimConfig};
use crate::math::Vec3;

/// Segment pairs closer than this many segments apart are never tested.
pub const ADJACENCY_EXCLUSION: usize = 2;

/// Closest points between segments `[a0, a1]` and `[b0, b1]`.
/// Returns `(s, t, point_on_a, point_on_b)` with `s, t` in `[0, 1]`.
pub fn closest_points_segments(a0: &Vec3, a1: &Vec3, b0: &Vec3, b1: &Vec3) -> (f64, f64, Vec3, Vec3) {
    let d1 = a1 - a0;
    let d2 = b1 - b0;
    let r = a0 - b0;
    let a = d1.dot(&d1);
    let e = d2.dot(&d2);
    let f = d2.dot(&r);
    let eps = 1e-18;
    let (s, t);
    if a <= eps && e <= eps {
        s = 0.0;
        t = 0.0;
    } else if a <= eps {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(&r);
        if e <= eps {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut s0 = if denom > eps * a * e {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t0 = 0.0;
                s0 = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t0 = 1.0;
                s0 = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s0;
            t = t0;
        }
    }
    (s, t, a0 + d1 * s, b0 + d2 * t)
}

/// Non-adjacent segment pairs whose closest distance is below
/// `2 * radius + margin`, sorted by `(seg_a, seg_b)`.
///
/// Broad phase is sort-and-sweep of padded bounding boxes along x.
pub fn segment_contact_pairs(positions: &[Vec3], radius: f64, margin: f64) -> Vec<(usize, usize)> {
    let segs = positions.len().saturating_sub(1);
    if segs < ADJACENCY_EXCLUSION + 2 {
        return Vec::new();
    }
    let reach = 2.0 * radius + margin;
    let pad = 0.5 * reach;
    let boxes: Vec<(Vec3, Vec3)> = (0..segs)
        .map(|s| {
            let (p, q) = (positions[s], positions[s + 1]);
            (p.inf(&q).add_scalar(-pad), p.sup(&q).add_scalar(pad))
        })
        .collect();
    let mut order: Vec<usize> = (0..segs).collect();
    order.sort_unstable_by(|&a, &b| boxes[a].0.x.total_cmp(&boxes[b].0.x).then(a.cmp(&b)));
    let mut out = Vec::new();
    for (k, &a) in order.iter().enumerate() {
        let (lo_a, hi_a) = boxes[a];
        for &b in &order[k + 1..] {
            let (lo_b, hi_b) = boxes[b];
            if lo_b.x > hi_a.x {
                break;
            }
            if a.abs_diff(b) <= ADJACENCY_EXCLUSION || lo_b.y > hi_a.y || lo_a.y > hi_b.y || lo_b.z > hi_a.z || lo_a.z > hi_b.z {
                continue;
            }
            let (i, j) = (a.min(b), a.max(b));
            let (_, _, ca, cb) = closest_points_segments(&positions[i], &positions[i + 1], &positions[j], &positions[j + 1]);
            if (ca - cb).norm() < reach {
                out.push((i, j));
            }
        }
    }
    out.sort_unstable();
    out
}

pub(crate) fn collision_constraints(state: &RodState, material: &RodMaterial, config: &SimConfig, out: &mut Vec<Constraint>) {
    if config.ground {
        out.extend((0..state.particle_count()).map(|particle| Constraint::Ground { particle }));
    }
    if config.self_collision {
        out.extend(
            segment_contact_pairs(&state.positions, material.radius, config.collision_margin)
                .into_iter()
                .map(|(seg_a, seg_b)| Constraint::SelfContact { seg_a, seg_b }),
        );
    }
}

/// One projection pass of ground and self-contact constraints on a copy of
/// `state`; returns the per-particle position corrections.
pub fn resolve_collisions(state: &RodState, material: &RodMaterial, config: &SimConfig) -> Vec<Vec3> {
    let mut constraints = Vec::new();
    collision_constraints(state, material, config, &mut constraints);
    let mut work = state.clone();
    let mut lambdas = vec![Vec3::zeros(); constraints.len()];
    let ctx = ProjectionContext {
        stretch_shear_compliance: material.stretch_shear_compliance,
        bend_twist_compliance: material.bend_twist_compliance,
        radius: material.radius,
        ground_height: config.ground_height,
        ground_friction: material.ground_friction,
        self_friction: material.self_friction,
        start_positions: &state.positions,
        solver: config.solver,
    };
    xpbd_project(&constraints, &mut lambdas, &mut work, &ctx, config.dt_sub());
    work.positions
        .iter()
        .zip(&state.positions)
        .map(|(a, b)| a - b)
        .collect()
}
