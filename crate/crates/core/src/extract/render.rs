use super::{Camera, DepthScene, DepthView};
use crate::math::Vec3;
use crate::par::{self, Execution};

/// Ray-casts the rope (capsules of `radius` between consecutive particles,
/// a sphere for a single particle) into a z-depth raster with a mask.
pub fn render_depth(positions: &[Vec3], radius: f64, camera: &Camera, exec: Execution) -> DepthView {
    let (w, h) = (camera.width, camera.height);
    let capsules: Vec<(Vec3, Vec3)> = match positions.len() {
        0 => Vec::new(),
        1 => vec![(positions[0], positions[0])],
        _ => positions.windows(2).map(|s| (s[0], s[1])).collect(),
    };
    let rects: Vec<Option<[usize; 4]>> = capsules
        .iter()
        .map(|(a, b)| screen_rect(camera, a, b, radius))
        .collect();

    let rows = par::map_range(exec, h, |v| {
        let mut depth = vec![0.0f32; w];
        let mut mask = vec![false; w];
        let mut best = vec![f64::INFINITY; w];
        for ((a, b), rect) in capsules.iter().zip(&rects) {
            let Some([u0, u1, v0, v1]) = *rect else { continue };
            if v < v0 || v > v1 {
                continue;
            }
            for u in u0..=u1 {
                let dir = camera.ray(u as f64, v as f64);
                let scale = dir.norm();
                let rd = dir / scale;
                if let Some(t) = capsule_hit(&camera.position, &rd, a, b, radius) {
                    // z-depth is distance along the ray divided by |dir|
                    let z = t / scale;
                    if z > 0.0 && z < best[u] {
                        best[u] = z;
                    }
                }
            }
        }
        for u in 0..w {
            if best[u].is_finite() {
                depth[u] = best[u] as f32;
                mask[u] = true;
            }
        }
        (mask, depth)
    });

    let mut mask = Vec::with_capacity(w * h);
    let mut depth = Vec::with_capacity(w * h);
    for (m, d) in rows {
        mask.extend(m);
        depth.extend(d);
    }
    DepthView {
        camera: *camera,
        mask,
        depth,
    }
}

/// `views` cameras spaced evenly on a circle of radius 0.25 m, 0.7 m above
/// `target` and looking at it (640×480, focal 600 px).
pub fn oracle_cameras(views: usize, target: Vec3) -> Vec<Camera> {
    (0..views)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / views.max(1) as f64;
            let eye = target + Vec3::new(0.25 * a.cos(), 0.25 * a.sin(), 0.7);
            Camera::look_at(eye, target, Vec3::x(), 640, 480, 600.0)
        })
        .collect()
}

pub fn render_scene(positions: &[Vec3], radius: f64, cameras: &[Camera], table_height: f64, exec: Execution) -> DepthScene {
    DepthScene {
        views: cameras.iter().map(|c| render_depth(positions, radius, c, exec)).collect(),
        table_height,
    }
}

/// Inclusive pixel rectangle `[u0, u1, v0, v1]` covering the capsule, or
/// `None` when it is entirely off screen.
fn screen_rect(camera: &Camera, a: &Vec3, b: &Vec3, r: f64) -> Option<[usize; 4]> {
    let lo = a.inf(b) - Vec3::repeat(r);
    let hi = a.sup(b) + Vec3::repeat(r);
    let (mut umin, mut umax, mut vmin, mut vmax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..8 {
        let c = Vec3::new(
            if i & 1 == 0 { lo.x } else { hi.x },
            if i & 2 == 0 { lo.y } else { hi.y },
            if i & 4 == 0 { lo.z } else { hi.z },
        );
        match camera.project(&c) {
            Some((u, v, _)) => {
                umin = umin.min(u);
                umax = umax.max(u);
                vmin = vmin.min(v);
                vmax = vmax.max(v);
            }
            None => {
                // straddles the camera plane: test every pixel
                return Some([0, camera.width - 1, 0, camera.height - 1]);
            }
        }
    }
    let (wmax, hmax) = ((camera.width - 1) as f64, (camera.height - 1) as f64);
    if umax < 0.0 || vmax < 0.0 || umin > wmax || vmin > hmax {
        return None;
    }
    Some([
        umin.floor().max(0.0) as usize,
        umax.ceil().min(wmax) as usize,
        vmin.floor().max(0.0) as usize,
        vmax.ceil().min(hmax) as usize,
    ])
}

/// Nearest positive hit distance of the unit ray `ro + t rd` with the
/// capsule `[pa, pb]` of radius `r`.
fn capsule_hit(ro: &Vec3, rd: &Vec3, pa: &Vec3, pb: &Vec3, r: f64) -> Option<f64> {
    let ba = pb - pa;
    let oa = ro - pa;
    let baba = ba.dot(&ba);
    if baba < 1e-24 {
        return sphere_hit(ro, rd, pa, r);
    }
    let bard = ba.dot(rd);
    let baoa = ba.dot(&oa);
    let rdoa = rd.dot(&oa);
    let oaoa = oa.dot(&oa);
    let a = baba - bard * bard;
    let b = baba * rdoa - baoa * bard;
    let c = baba * oaoa - baoa * baoa - r * r * baba;
    if a > 1e-18 {
        let h = b * b - a * c;
        if h < 0.0 {
            return None;
        }
        let t = (-b - h.sqrt()) / a;
        let y = baoa + t * bard;
        if y > 0.0 && y < baba {
            return (t > 0.0).then_some(t);
        }
    }
    // body missed within the segment: the front surface is an end cap
    let ta = sphere_hit(ro, rd, pa, r);
    let tb = sphere_hit(ro, rd, pb, r);
    match (ta, tb) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

fn sphere_hit(ro: &Vec3, rd: &Vec3, c: &Vec3, r: f64) -> Option<f64> {
    let oc = ro - c;
    let b = oc.dot(rd);
    let h = b * b - (oc.dot(&oc) - r * r);
    if h < 0.0 {
        return None;
    }
    let t = -b - h.sqrt();
    (t > 0.0).then_some(t)
}
