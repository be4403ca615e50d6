//! Direct solve of the coupled stretch-shear and bend-twist constraints.
//!
//! Constraints are grouped per segment `i` as `[ss_i; bt_i]`; the system
//! `J M^-1 J^T + alpha~` is then block tridiagonal with 6x6 blocks and is
//! solved exactly with the block Thomas algorithm. One call is a single
//! linearized XPBD update of all rod constraints at once.

use super::RodState;
use crate::math::{rotate_by, Vec3};
use nalgebra::{Matrix3, Matrix6, Vector6};

/// Relative diagonal regularization. Redundant rows (a taut chain between two
/// pins) make the system singular; the regularized solution is the
/// least-squares step, whose large multiplier components lie in the null
/// space of `J^T` and do not move anything.
const REGULARIZATION: f64 = 1e-9;
/// Largest particle displacement per solve, in units of the shortest rest
/// length, and largest segment rotation (rad).
const MAX_STEP: f64 = 1.0;
const MAX_ROTATION: f64 = 0.5;

pub(crate) struct RodSolver {
    diag: Vec<Matrix6<f64>>,
    upper: Vec<Matrix6<f64>>,
    rhs: Vec<Vector6<f64>>,
    c_prime: Vec<Matrix6<f64>>,
    d_prime: Vec<Vector6<f64>>,
    d3: Vec<Vec3>,
    a: Vec<Matrix3<f64>>,
    b: Vec<Matrix3<f64>>,
}

impl RodSolver {
    pub(crate) fn new() -> Self {
        Self {
            diag: Vec::new(),
            upper: Vec::new(),
            rhs: Vec::new(),
            c_prime: Vec::new(),
            d_prime: Vec::new(),
            d3: Vec::new(),
            a: Vec::new(),
            b: Vec::new(),
        }
    }

    /// `ss_lambda[i]` / `bt_lambda[j]` are the accumulated multipliers.
    /// `inv_mass` overrides the state's inverse masses (attached particles are
    /// pinned here). Returns the number of constraints with a singular row.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn solve(
        &mut self,
        state: &mut RodState,
        inv_mass: &[f64],
        ss_present: &[bool],
        bt_present: &[bool],
        alpha_ss: f64,
        alpha_bt: f64,
        ss_lambda: &mut [Vec3],
        bt_lambda: &mut [Vec3],
    ) -> usize {
        let n = state.segment_count();
        let n_bt = state.rest_darboux.len();
        self.diag.clear();
        self.diag.resize(n, Matrix6::zeros());
        self.upper.clear();
        self.upper.resize(n.saturating_sub(1), Matrix6::zeros());
        self.rhs.clear();
        self.rhs.resize(n, Vector6::zeros());
        self.d3.clear();
        self.a.clear();
        self.b.clear();

        let wr = &state.inverse_inertias;
        let l = &state.rest_lengths;
        let mut skipped = 0;

        for i in 0..n {
            self.d3.push(state.orientations[i] * Vec3::z());
        }
        for j in 0..n_bt {
            let ua = state.orientations[j];
            let ub = state.orientations[j + 1];
            let omega = (ua.conjugate() * ub).into_inner();
            let (w, v) = (omega.w, omega.imag());
            let vx = v.cross_matrix();
            let ja = (Matrix3::identity() * w - vx) * -0.5;
            let jb = (Matrix3::identity() * w + vx) * 0.5;
            self.a.push(ja * ua.to_rotation_matrix().matrix().transpose());
            self.b.push(jb * ub.to_rotation_matrix().matrix().transpose());
        }

        for i in 0..n {
            let s = self.d3[i].cross_matrix();
            let wsum = (inv_mass[i] + inv_mass[i + 1]) / (l[i] * l[i]);
            let k_ss = Matrix3::identity() * (wsum + alpha_ss) + s * s.transpose() * wr[i];
            let c_ss = super::eval_stretch_shear(
                &state.positions[i],
                &state.positions[i + 1],
                l[i],
                &state.orientations[i],
            );
            let r_ss = -c_ss - ss_lambda[i] * alpha_ss;
            let d = &mut self.diag[i];
            if k_ss.trace() > 0.0 {
                d.fixed_view_mut::<3, 3>(0, 0).copy_from(&k_ss);
                self.rhs[i].fixed_rows_mut::<3>(0).copy_from(&r_ss);
            } else {
                skipped += 1;
                d.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
            }

            if i < n_bt {
                let (a, b) = (self.a[i], self.b[i]);
                let k_bt = a * a.transpose() * wr[i] + b * b.transpose() * wr[i + 1] + Matrix3::identity() * alpha_bt;
                let c_bt = super::eval_bend_twist(
                    &state.orientations[i],
                    &state.orientations[i + 1],
                    &state.rest_darboux[i],
                );
                let r_bt = -c_bt - bt_lambda[i] * alpha_bt;
                if k_bt.trace() > 0.0 {
                    let coupling = s * a.transpose() * wr[i];
                    d.fixed_view_mut::<3, 3>(3, 3).copy_from(&k_bt);
                    d.fixed_view_mut::<3, 3>(0, 3).copy_from(&coupling);
                    d.fixed_view_mut::<3, 3>(3, 0).copy_from(&coupling.transpose());
                    self.rhs[i].fixed_rows_mut::<3>(3).copy_from(&r_bt);
                } else {
                    skipped += 1;
                    d.fixed_view_mut::<3, 3>(3, 3).copy_from(&Matrix3::identity());
                }
            } else {
                d.fixed_view_mut::<3, 3>(3, 3).copy_from(&Matrix3::identity());
            }

            if i + 1 < n {
                let u = &mut self.upper[i];
                let shared = -inv_mass[i + 1] / (l[i] * l[i + 1]);
                u.fixed_view_mut::<3, 3>(0, 0).copy_from(&(Matrix3::identity() * shared));
                if i < n_bt {
                    let s_next = self.d3[i + 1].cross_matrix();
                    let b = self.b[i];
                    u.fixed_view_mut::<3, 3>(3, 0).copy_from(&(b * s_next.transpose() * wr[i + 1]));
                    if i + 1 < n_bt {
                        let a_next = self.a[i + 1];
                        u.fixed_view_mut::<3, 3>(3, 3).copy_from(&(b * a_next.transpose() * wr[i + 1]));
                    }
                }
            }
        }

        // constraints missing from the list get decoupled identity rows
        for i in 0..n {
            for (present, off) in [(ss_present[i], 0usize), (i >= n_bt || bt_present[i], 3usize)] {
                if present {
                    continue;
                }
                for k in off..off + 3 {
                    for c in 0..6 {
                        self.diag[i][(k, c)] = 0.0;
                        self.diag[i][(c, k)] = 0.0;
                        if i + 1 < n {
                            self.upper[i][(k, c)] = 0.0;
                        }
                        if i > 0 {
                            self.upper[i - 1][(c, k)] = 0.0;
                        }
                    }
                    self.diag[i][(k, k)] = 1.0;
                    self.rhs[i][k] = 0.0;
                }
            }
        }

        for d in self.diag.iter_mut() {
            for k in 0..6 {
                d[(k, k)] *= 1.0 + REGULARIZATION;
            }
        }

        // block Thomas elimination
        self.c_prime.clear();
        self.d_prime.clear();
        for i in 0..n {
            let mut m = self.diag[i];
            let mut r = self.rhs[i];
            if i > 0 {
                let lower = self.upper[i - 1].transpose();
                m -= lower * self.c_prime[i - 1];
                r -= lower * self.d_prime[i - 1];
            }
            let (cp, dp) = match m.cholesky() {
                Some(ch) => {
                    let cp = if i + 1 < n { ch.solve(&self.upper[i]) } else { Matrix6::zeros() };
                    (cp, ch.solve(&r))
                }
                None => {
                    let lu = m.lu();
                    let cp = if i + 1 < n {
                        lu.solve(&self.upper[i]).unwrap_or_else(Matrix6::zeros)
                    } else {
                        Matrix6::zeros()
                    };
                    (cp, lu.solve(&r).unwrap_or_else(Vector6::zeros))
                }
            };
            self.c_prime.push(cp);
            self.d_prime.push(dp);
        }
        for i in (0..n.saturating_sub(1)).rev() {
            let next = self.d_prime[i + 1];
            self.d_prime[i] -= self.c_prime[i] * next;
        }

        // dx = M^-1 J^T dl, dw = I^-1 J^T dl
        let dl = &self.d_prime;
        let mut dx = vec![Vec3::zeros(); n + 1];
        let mut dw = vec![Vec3::zeros(); n];
        let mut max_dx: f64 = 0.0;
        let mut max_dw: f64 = 0.0;
        for k in 0..=n {
            let w = inv_mass[k];
            if w == 0.0 {
                continue;
            }
            let mut d = Vec3::zeros();
            if k < n {
                d -= dl[k].fixed_rows::<3>(0) / l[k];
            }
            if k > 0 {
                d += dl[k - 1].fixed_rows::<3>(0) / l[k - 1];
            }
            dx[k] = d * w;
            max_dx = max_dx.max(dx[k].norm());
        }
        for i in 0..n {
            if wr[i] == 0.0 {
                continue;
            }
            let dss: Vec3 = dl[i].fixed_rows::<3>(0).into();
            let mut d = dss.cross(&self.d3[i]);
            if i < n_bt {
                d += self.a[i].transpose() * dl[i].fixed_rows::<3>(3);
            }
            if i > 0 {
                d += self.b[i - 1].transpose() * dl[i - 1].fixed_rows::<3>(3);
            }
            dw[i] = d * wr[i];
            max_dw = max_dw.max(dw[i].norm());
        }

        // trust region: far from the constraint manifold the linear step overshoots
        let min_len = l.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut scale: f64 = 1.0;
        if max_dx > MAX_STEP * min_len {
            scale = scale.min(MAX_STEP * min_len / max_dx);
        }
        if max_dw > MAX_ROTATION {
            scale = scale.min(MAX_ROTATION / max_dw);
        }

        for k in 0..=n {
            if inv_mass[k] != 0.0 {
                state.positions[k] += dx[k] * scale;
            }
        }
        for i in 0..n {
            let dss: Vec3 = dl[i].fixed_rows::<3>(0).into();
            ss_lambda[i] += dss * scale;
            if i < n_bt {
                let dbt: Vec3 = dl[i].fixed_rows::<3>(3).into();
                bt_lambda[i] += dbt * scale;
            }
            if wr[i] != 0.0 {
                state.orientations[i] = rotate_by(&state.orientations[i], &(dw[i] * scale));
            }
        }
        skipped
    }
}
