use super::direct::RodSolver;
use super::RodState;
use crate::math::{rotate_by, Quat, Vec3};
use serde::{Deserialize, Serialize};

/// Stretch-shear residual `(p_b - p_a) / l0 - d3(u)`, where `d3` is the
/// segment frame's +z axis in world coordinates.
pub fn eval_stretch_shear(p_a: &Vec3, p_b: &Vec3, rest_length: f64, u: &Quat) -> Vec3 {
    (p_b - p_a) / rest_length - u * Vec3::z()
}

/// Bend-twist residual `Im(conj(u_a) u_b) - Im(±rest)`, with the sign of
/// `rest` picked to minimize the residual.
pub fn eval_bend_twist(u_a: &Quat, u_b: &Quat, rest: &Quat) -> Vec3 {
    let omega = (u_a.conjugate() * u_b).into_inner();
    let rest = signed_rest(&omega, rest);
    omega.imag() - rest.imag()
}

fn signed_rest(omega: &nalgebra::Quaternion<f64>, rest: &Quat) -> nalgebra::Quaternion<f64> {
    let r = rest.into_inner();
    if (omega - r).norm_squared() > (omega + r).norm_squared() {
        -r
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Constraint {
    StretchShear { segment: usize },
    BendTwist { joint: usize },
    /// Zero-compliance pin of a particle to a world point.
    Attachment { particle: usize, target: Vec3 },
    /// `z >= ground_height + radius`.
    Ground { particle: usize },
    /// Non-adjacent segments kept `2 * radius` apart.
    SelfContact { seg_a: usize, seg_b: usize },
}

/// How the rod's own constraints (stretch-shear, bend-twist) are projected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    /// One exact block-tridiagonal solve of all rod constraints per
    /// iteration, with attached particles pinned at their grasp points;
    /// contacts follow as a Gauss-Seidel pass.
    #[default]
    Direct,
    /// Plain Gauss-Seidel over the whole list in order.
    GaussSeidel,
}

/// Everything the projection needs besides the mutable state.
#[derive(Debug, Clone, Copy)]
pub struct ProjectionContext<'a> {
    pub stretch_shear_compliance: f64,
    pub bend_twist_compliance: f64,
    pub radius: f64,
    pub ground_height: f64,
    pub ground_friction: f64,
    pub self_friction: f64,
    /// Positions at the start of the substep, for positional friction.
    pub start_positions: &'a [Vec3],
    pub solver: SolverKind,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ProjectStats {
    /// Constraints with a singular system (every participant pinned).
    pub skipped: usize,
    pub active_contacts: usize,
}

impl std::ops::AddAssign for ProjectStats {
    fn add_assign(&mut self, rhs: Self) {
        self.skipped += rhs.skipped;
        self.active_contacts += rhs.active_contacts;
    }
}

/// One projection pass over `constraints`. `lambdas` holds the accumulated
/// multiplier of each constraint and must be reset by the caller at every
/// substep.
///
/// With [`SolverKind::GaussSeidel`] this is a single sweep in list order with
/// corrections applied immediately. With [`SolverKind::Direct`] attachments
/// are enforced first, then all rod constraints are solved jointly with the
/// attached particles held fixed, then contacts are swept in list order.
pub fn xpbd_project(
    constraints: &[Constraint],
    lambdas: &mut [Vec3],
    state: &mut RodState,
    ctx: &ProjectionContext<'_>,
    dt_sub: f64,
) -> ProjectStats {
    project_with(constraints, lambdas, state, ctx, dt_sub, &mut RodSolver::new())
}

pub(crate) fn project_with(
    constraints: &[Constraint],
    lambdas: &mut [Vec3],
    state: &mut RodState,
    ctx: &ProjectionContext<'_>,
    dt_sub: f64,
    solver: &mut RodSolver,
) -> ProjectStats {
    debug_assert_eq!(constraints.len(), lambdas.len());
    match ctx.solver {
        SolverKind::GaussSeidel => sweep(constraints.iter().zip(lambdas.iter_mut()), state, ctx, dt_sub),
        SolverKind::Direct => direct_pass(constraints, lambdas, state, ctx, dt_sub, solver),
    }
}

fn direct_pass(
    constraints: &[Constraint],
    lambdas: &mut [Vec3],
    state: &mut RodState,
    ctx: &ProjectionContext<'_>,
    dt_sub: f64,
    solver: &mut RodSolver,
) -> ProjectStats {
    let inv_dt2 = 1.0 / (dt_sub * dt_sub);
    let n = state.segment_count();
    let n_bt = state.rest_darboux.len();
    let mut stats = ProjectStats::default();

    let mut inv_mass = state.inverse_masses.clone();
    let attachments = constraints
        .iter()
        .zip(lambdas.iter_mut())
        .filter(|(c, _)| matches!(c, Constraint::Attachment { .. }));
    stats += sweep(attachments, state, ctx, dt_sub);
    for c in constraints {
        if let Constraint::Attachment { particle, .. } = *c {
            inv_mass[particle] = 0.0;
        }
    }

    let mut ss_slot = vec![usize::MAX; n];
    let mut bt_slot = vec![usize::MAX; n_bt];
    for (k, c) in constraints.iter().enumerate() {
        match *c {
            Constraint::StretchShear { segment } => ss_slot[segment] = k,
            Constraint::BendTwist { joint } => bt_slot[joint] = k,
            _ => {}
        }
    }
    let ss_present: Vec<bool> = ss_slot.iter().map(|&k| k != usize::MAX).collect();
    let bt_present: Vec<bool> = bt_slot.iter().map(|&k| k != usize::MAX).collect();
    if ss_present.iter().any(|&p| p) || bt_present.iter().any(|&p| p) {
        let gather = |slots: &[usize], lambdas: &[Vec3]| -> Vec<Vec3> {
            slots.iter().map(|&k| if k == usize::MAX { Vec3::zeros() } else { lambdas[k] }).collect()
        };
        let mut ss_l = gather(&ss_slot, lambdas);
        let mut bt_l = gather(&bt_slot, lambdas);
        stats.skipped += solver.solve(
            state,
            &inv_mass,
            &ss_present,
            &bt_present,
            ctx.stretch_shear_compliance * inv_dt2,
            ctx.bend_twist_compliance * inv_dt2,
            &mut ss_l,
            &mut bt_l,
        );
        for (slots, vals) in [(&ss_slot, &ss_l), (&bt_slot, &bt_l)] {
            for (&k, v) in slots.iter().zip(vals.iter()) {
                if k != usize::MAX {
                    lambdas[k] = *v;
                }
            }
        }
    }

    let contacts = constraints
        .iter()
        .zip(lambdas.iter_mut())
        .filter(|(c, _)| matches!(c, Constraint::Ground { .. } | Constraint::SelfContact { .. }));
    stats += sweep(contacts, state, ctx, dt_sub);
    stats
}

fn sweep<'c, I>(items: I, state: &mut RodState, ctx: &ProjectionContext<'_>, dt_sub: f64) -> ProjectStats
where
    I: Iterator<Item = (&'c Constraint, &'c mut Vec3)>,
{
    let inv_dt2 = 1.0 / (dt_sub * dt_sub);
    let mut stats = ProjectStats::default();
    for (c, lambda) in items {
        let solved = match *c {
            Constraint::StretchShear { segment } => {
                project_stretch_shear(state, segment, ctx.stretch_shear_compliance * inv_dt2, lambda)
            }
            Constraint::BendTwist { joint } => {
                project_bend_twist(state, joint, ctx.bend_twist_compliance * inv_dt2, lambda)
            }
            Constraint::Attachment { particle, target } => {
                let w = state.inverse_masses[particle];
                if w > 0.0 {
                    let c = state.positions[particle] - target;
                    *lambda -= c / w;
                    state.positions[particle] = target;
                    true
                } else {
                    false
                }
            }
            Constraint::Ground { particle } => {
                if project_ground(state, particle, ctx) {
                    stats.active_contacts += 1;
                }
                true
            }
            Constraint::SelfContact { seg_a, seg_b } => match project_self_contact(state, seg_a, seg_b, ctx) {
                Some(active) => {
                    if active {
                        stats.active_contacts += 1;
                    }
                    true
                }
                None => false,
            },
        };
        if !solved {
            stats.skipped += 1;
        }
    }
    stats
}

fn project_stretch_shear(state: &mut RodState, s: usize, alpha: f64, lambda: &mut Vec3) -> bool {
    let (a, b) = (s, s + 1);
    let l = state.rest_lengths[s];
    let wa = state.inverse_masses[a];
    let wb = state.inverse_masses[b];
    let wr = state.inverse_inertias[s];
    let u = state.orientations[s];
    let d3 = u * Vec3::z();
    let c = (state.positions[b] - state.positions[a]) / l - d3;

    // K = a0 I + wr (I - d3 d3^T), a0 = (wa + wb)/l^2 + alpha
    let a0 = (wa + wb) / (l * l) + alpha;
    if !(a0 > 0.0) {
        return false;
    }
    let rhs = -c - *lambda * alpha;
    let along = d3 * d3.dot(&rhs);
    let dl = along / a0 + (rhs - along) / (a0 + wr);
    *lambda += dl;

    state.positions[a] -= dl * (wa / l);
    state.positions[b] += dl * (wb / l);
    if wr > 0.0 {
        let dw = dl.cross(&d3) * wr;
        state.orientations[s] = rotate_by(&u, &dw);
    }
    true
}

fn project_bend_twist(state: &mut RodState, j: usize, alpha: f64, lambda: &mut Vec3) -> bool {
    let ua = state.orientations[j];
    let ub = state.orientations[j + 1];
    let wa = state.inverse_inertias[j];
    let wb = state.inverse_inertias[j + 1];
    let omega = (ua.conjugate() * ub).into_inner();
    let rest = signed_rest(&omega, &state.rest_darboux[j]);
    let c = omega.imag() - rest.imag();
    let (w, v) = (omega.w, omega.imag());

    // K = k (I - v v^T) + alpha I with k = (wa + wb)/4, inverted in closed form
    let k = 0.25 * (wa + wb);
    let rhs = -c - *lambda * alpha;
    let vn = v.norm();
    let dl = if vn > 1e-12 {
        let vh = v / vn;
        let along = vh * vh.dot(&rhs);
        let perp_eig = k + alpha;
        let along_eig = k * (1.0 - vn * vn) + alpha;
        if !(perp_eig > 0.0) || !(along_eig > 1e-300) {
            return false;
        }
        (rhs - along) / perp_eig + along / along_eig
    } else {
        let eig = k + alpha;
        if !(eig > 0.0) {
            return false;
        }
        rhs / eig
    };
    *lambda += dl;

    // material-frame Jacobians: Ja = -1/2 (w I - [v]x), Jb = 1/2 (w I + [v]x)
    let vxl = v.cross(&dl);
    if wa > 0.0 {
        let local = -(dl * w + vxl) * (0.5 * wa);
        state.orientations[j] = rotate_by(&ua, &(ua * local));
    }
    if wb > 0.0 {
        let local = (dl * w - vxl) * (0.5 * wb);
        state.orientations[j + 1] = rotate_by(&ub, &(ub * local));
    }
    true
}

/// Returns whether the particle was in contact.
fn project_ground(state: &mut RodState, i: usize, ctx: &ProjectionContext<'_>) -> bool {
    let floor = ctx.ground_height + ctx.radius;
    let p = state.positions[i];
    if p.z >= floor || state.inverse_masses[i] == 0.0 {
        return false;
    }
    let depth = floor - p.z;
    let mut q = p;
    q.z = floor;
    // static/kinetic Coulomb friction on the substep displacement
    let disp = q - ctx.start_positions[i];
    let tangential = Vec3::new(disp.x, disp.y, 0.0);
    let tn = tangential.norm();
    let limit = ctx.ground_friction * depth;
    if tn > 0.0 {
        if tn <= limit {
            q -= tangential;
        } else {
            q -= tangential * (limit / tn);
        }
    }
    state.positions[i] = q;
    true
}

/// Returns `None` when all four particles are pinned, otherwise whether the
/// pair was in contact.
fn project_self_contact(
    state: &mut RodState,
    sa: usize,
    sb: usize,
    ctx: &ProjectionContext<'_>,
) -> Option<bool> {
    let idx = [sa, sa + 1, sb, sb + 1];
    let p = idx.map(|i| state.positions[i]);
    let w = idx.map(|i| state.inverse_masses[i]);
    let (s, t, ca, cb) = super::collision::closest_points_segments(&p[0], &p[1], &p[2], &p[3]);
    let target = 2.0 * ctx.radius;
    let delta = ca - cb;
    let dist = delta.norm();
    if dist >= target {
        return Some(false);
    }
    let n = if dist > 1e-12 {
        delta / dist
    } else {
        // coincident closest points: separate along the common normal
        let da = p[1] - p[0];
        let db = p[3] - p[2];
        let cr = da.cross(&db);
        if cr.norm() > 1e-12 {
            cr.normalize()
        } else {
            Vec3::z()
        }
    };
    let bary = [1.0 - s, s, -(1.0 - t), -t];
    let wsum: f64 = (0..4).map(|k| bary[k] * bary[k] * w[k]).sum();
    if !(wsum > 0.0) {
        return None;
    }
    let depth = target - dist;
    let dlambda = depth / wsum;
    let mut q = p;
    for k in 0..4 {
        q[k] += n * (bary[k] * w[k] * dlambda);
    }

    if ctx.self_friction > 0.0 {
        // relative tangential motion of the contact points over the substep
        let s0 = idx.map(|i| ctx.start_positions[i]);
        let ca_now = q[0] * (1.0 - s) + q[1] * s;
        let cb_now = q[2] * (1.0 - t) + q[3] * t;
        let ca_start = s0[0] * (1.0 - s) + s0[1] * s;
        let cb_start = s0[2] * (1.0 - t) + s0[3] * t;
        let rel = (ca_now - ca_start) - (cb_now - cb_start);
        let tang = rel - n * n.dot(&rel);
        let tn = tang.norm();
        if tn > 0.0 {
            let limit = ctx.self_friction * depth;
            let corr = if tn <= limit { tang } else { tang * (limit / tn) };
            let fl = 1.0 / wsum;
            for k in 0..4 {
                q[k] -= corr * (bary[k] * w[k] * fl);
            }
        }
    }
    for k in 0..4 {
        state.positions[idx[k]] = q[k];
    }
    Some(true)
}
