//! Small vector/quaternion helpers shared by the simulator and the pipeline.

use nalgebra::{Quaternion, UnitQuaternion, Vector2, Vector3};

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;
pub type Quat = UnitQuaternion<f64>;

/// Builds a unit quaternion from `[x, y, z, w]`, normalizing it.
pub fn quat_from_xyzw(q: [f64; 4]) -> Quat {
    UnitQuaternion::new_normalize(Quaternion::new(q[3], q[0], q[1], q[2]))
}

pub fn quat_to_xyzw(q: &Quat) -> [f64; 4] {
    let c = q.quaternion().coords;
    [c[0], c[1], c[2], c[3]]
}

/// Applies a small world-frame rotation `delta` (rad) to `q` using the
/// first-order update `q + 0.5 [delta, 0] q`, then renormalizes.
pub fn rotate_by(q: &Quat, delta: &Vec3) -> Quat {
    let dq = Quaternion::from_imag(*delta) * q.quaternion() * 0.5;
    UnitQuaternion::new_normalize(q.quaternion() + dq)
}

/// Minimal rotation taking +z onto `dir`.
pub fn rotation_from_z(dir: &Vec3) -> Quat {
    let z = Vec3::z();
    match UnitQuaternion::rotation_between(&z, dir) {
        Some(q) => q,
        // antiparallel: any half turn about an axis orthogonal to z
        None => UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI),
    }
}

/// Representative of `q` with non-negative scalar part.
pub fn canonical(q: Quat) -> Quat {
    if q.w < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

pub fn all_finite(v: &Vec3) -> bool {
    v.iter().all(|c| c.is_finite())
}

/// Spherical interpolation along the shortest arc.
pub fn slerp_shortest(a: &Quat, b: &Quat, t: f64) -> Quat {
    let b = if a.coords.dot(&b.coords) < 0.0 {
        UnitQuaternion::new_unchecked(-b.into_inner())
    } else {
        *b
    };
    a.try_slerp(&b, t, 1e-12).unwrap_or(*a)
}
