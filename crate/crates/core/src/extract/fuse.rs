use super::{DepthScene, ExtractError, PointCloud};
use crate::math::Vec3;
use std::collections::HashMap;

/// Back-projects every masked pixel with positive finite depth into the
/// world frame. Output order: view index, then pixel row-major.
pub fn fuse_views(scene: &DepthScene) -> Result<PointCloud, ExtractError> {
    let mut points = Vec::new();
    for view in &scene.views {
        let cam = &view.camera;
        for v in 0..cam.height {
            for u in 0..cam.width {
                let k = v * cam.width + u;
                let d = view.depth[k] as f64;
                if view.mask[k] && d > 0.0 && d.is_finite() {
                    points.push(cam.back_project(u as f64, v as f64, d));
                }
            }
        }
    }
    if points.is_empty() {
        return Err(ExtractError::EmptyObservation);
    }
    Ok(PointCloud { points })
}

/// One centroid per occupied voxel, voxel index `floor(coord / voxel)`.
/// Output is sorted by voxel index so it does not depend on input order
/// beyond floating-point summation.
pub fn voxel_downsample(cloud: &PointCloud, voxel: f64) -> PointCloud {
    assert!(voxel > 0.0, "voxel size must be positive");
    let mut acc: HashMap<[i64; 3], (Vec3, usize)> = HashMap::new();
    for p in &cloud.points {
        let key = [
            (p.x / voxel).floor() as i64,
            (p.y / voxel).floor() as i64,
            (p.z / voxel).floor() as i64,
        ];
        let e = acc.entry(key).or_insert((Vec3::zeros(), 0));
        e.0 += p;
        e.1 += 1;
    }
    let mut cells: Vec<_> = acc.into_iter().collect();
    cells.sort_unstable_by_key(|(k, _)| *k);
    PointCloud {
        points: cells.into_iter().map(|(_, (s, n))| s / n as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::super::{Camera, DepthView};
    use super::*;
    use crate::math::Quat;
    use approx::assert_relative_eq;

    fn single_pixel_view(position: Vec3) -> DepthView {
        let camera = Camera {
            fx: 100.0,
            fy: 100.0,
            cx: 50.0,
            cy: 50.0,
            width: 101,
            height: 101,
            position,
            orientation: Quat::identity(),
        };
        let mut mask = vec![false; 101 * 101];
        let mut depth = vec![0.0; 101 * 101];
        mask[50 * 101 + 50] = true;
        depth[50 * 101 + 50] = 1.0;
        DepthView { camera, mask, depth }
    }

    #[test]
    fn principal_point_back_projects_onto_axis() {
        let scene = DepthScene {
            views: vec![single_pixel_view(Vec3::zeros())],
            table_height: 0.0,
        };
        let cloud = fuse_views(&scene).unwrap();
        assert_eq!(cloud.points, vec![Vec3::new(0.0, 0.0, 1.0)]);
    }

    #[test]
    fn duplicated_view_doubles_points() {
        let v = single_pixel_view(Vec3::zeros());
        let scene = DepthScene {
            views: vec![v.clone(), v],
            table_height: 0.0,
        };
        let cloud = fuse_views(&scene).unwrap();
        assert_eq!(cloud.points.len(), 2);
        assert_eq!(cloud.points[0], cloud.points[1]);
    }

    #[test]
    fn translation_shifts_points() {
        let t = Vec3::new(0.3, -0.2, 0.7);
        let scene = DepthScene {
            views: vec![single_pixel_view(t)],
            table_height: 0.0,
        };
        assert_relative_eq!(fuse_views(&scene).unwrap().points[0], Vec3::new(0.0, 0.0, 1.0) + t, epsilon = 1e-15);
    }

    #[test]
    fn invalid_depth_is_skipped_and_empty_is_error() {
        let mut v = single_pixel_view(Vec3::zeros());
        v.depth[50 * 101 + 50] = f32::NAN;
        let scene = DepthScene {
            views: vec![v],
            table_height: 0.0,
        };
        assert!(matches!(fuse_views(&scene), Err(ExtractError::EmptyObservation)));
    }

    #[test]
    fn voxel_examples() {
        let c = PointCloud {
            points: vec![Vec3::zeros(), Vec3::new(0.001, 0.0, 0.0)],
        };
        let d = voxel_downsample(&c, 0.005);
        assert_eq!(d.points.len(), 1);
        assert_relative_eq!(d.points[0], Vec3::new(0.0005, 0.0, 0.0), epsilon = 1e-15);

        let c = PointCloud {
            points: vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0)],
        };
        assert_eq!(voxel_downsample(&c, 0.005).points.len(), 2);

        // corners of a cube two voxels wide, each in its own voxel
        let v = 0.005;
        let mut pts = Vec::new();
        for i in 0..8 {
            let f = |b: usize| if i & b != 0 { 1.5 * v } else { 0.5 * v };
            pts.push(Vec3::new(f(1), f(2), f(4)));
        }
        assert_eq!(voxel_downsample(&PointCloud { points: pts }, v).points.len(), 8);
    }
}
