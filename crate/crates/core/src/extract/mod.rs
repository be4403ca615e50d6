//! Snapshot grounding: masked multi-view depth -> ordered 100-particle state.
//!
//! Pipeline: back-project and fuse views, voxel downsample, skeletonize the
//! top-down footprint, walk the skeleton from one end resolving crossings by
//! strand height, lift the path back to 3D, resample by arc length.

mod camera;
mod fuse;
mod grid;
mod lift;
mod path;
mod render;
mod resample;
mod scene_io;
mod skeleton;

pub use camera::Camera;
pub use fuse::{fuse_views, voxel_downsample};
pub use lift::lift_to_3d;
pub use path::{order_and_resolve, CenterlinePath, Crossing, Layer, Passage};
pub use render::{oracle_cameras, render_depth, render_scene};
pub use resample::{resample_arclength, resample_polyline};
pub use scene_io::{read_scene, write_scene};
pub use skeleton::{skeletonize_2d, Skeleton};

use crate::math::Vec3;
use crate::state::{FormatError, ParticleState, PARTICLE_COUNT};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("no masked pixels with valid depth in any view")]
    EmptyObservation,
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("skeleton has {endpoints} endpoints, expected 2")]
    Topology { endpoints: usize },
    #[error("skeleton junction of degree {degree} cannot be resolved")]
    UnresolvableJunction { degree: usize },
    #[error("skeleton walk from the first endpoint left {unvisited} edges unvisited")]
    IncompletePath { unvisited: usize },
    #[error("no path vertex has nearby cloud points")]
    Lifting,
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error(transparent)]
    Format(#[from] FormatError),
}

/// One camera view: a boolean mask and a z-depth raster, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthView {
    pub camera: Camera,
    pub mask: Vec<bool>,
    pub depth: Vec<f32>,
}

impl DepthView {
    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthScene {
    pub views: Vec<DepthView>,
    /// Table plane height; its normal is +z.
    pub table_height: f64,
}

impl DepthScene {
    pub fn validate(&self) -> Result<(), ExtractError> {
        if self.views.is_empty() {
            return Err(ExtractError::InvalidScene("scene has no views".into()));
        }
        for (i, v) in self.views.iter().enumerate() {
            v.camera
                .validate()
                .map_err(|e| ExtractError::InvalidScene(format!("view {i}: {e}")))?;
            let n = v.camera.width * v.camera.height;
            if v.mask.len() != n || v.depth.len() != n {
                return Err(ExtractError::InvalidScene(format!(
                    "view {i}: raster sizes {}/{} do not match {}x{}",
                    v.mask.len(),
                    v.depth.len(),
                    v.camera.width,
                    v.camera.height
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
}

/// Every length threshold of the pipeline is a multiple of `voxel`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractParams {
    pub voxel: f64,
    /// Rope radius, used to separate height clusters and to place the
    /// centerline below the observed top surface.
    pub rope_radius: f64,
    /// Alpha-shape radius, in voxels.
    pub alpha: f64,
    /// Leaf branches shorter than this are pruned, in voxels.
    pub prune_len: f64,
    /// Window for strand-height comparison at crossings, in voxels.
    pub window: f64,
    /// Height of the observed top surface above the centerline (m). The
    /// mean height of the visible upper half of a round section sits
    /// pi/4 radius above its axis.
    pub surface_offset: f64,
    pub particles: usize,
}

impl Default for ExtractParams {
    fn default() -> Self {
        Self {
            voxel: 0.005,
            rope_radius: 0.005,
            alpha: 2.0,
            prune_len: 3.0,
            window: 5.0,
            surface_offset: std::f64::consts::FRAC_PI_4 * 0.005,
            particles: PARTICLE_COUNT,
        }
    }
}

impl ExtractParams {
    pub fn validate(&self) -> Result<(), ExtractError> {
        let ok = [self.voxel, self.rope_radius, self.alpha, self.prune_len, self.window]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if !ok || !self.surface_offset.is_finite() || self.particles < 2 {
            return Err(ExtractError::Degenerate("extraction parameters must be positive".into()));
        }
        Ok(())
    }
}

/// Full pipeline. Always yields exactly `params.particles` points or an error.
pub fn extract_points(scene: &DepthScene, params: &ExtractParams) -> Result<(Vec<Vec3>, CenterlinePath), ExtractError> {
    params.validate()?;
    scene.validate()?;
    let raw = fuse_views(scene)?;
    let cloud = voxel_downsample(&raw, params.voxel);
    let skeleton = skeletonize_2d(&cloud, params)?;
    let path = order_and_resolve(&skeleton, &cloud, params)?;
    let mut polyline = lift_to_3d(&path, &cloud, params)?;
    // the centerline cannot sit lower than one radius above the table
    let floor = scene.table_height + params.rope_radius;
    for p in &mut polyline {
        p.z = p.z.max(floor);
    }
    let points = resample_polyline(&polyline, params.particles)?;
    Ok((points, path))
}

pub fn extract(scene: &DepthScene, params: &ExtractParams) -> Result<ParticleState, ExtractError> {
    let mut p = *params;
    p.particles = PARTICLE_COUNT;
    let (points, _) = extract_points(scene, &p)?;
    Ok(ParticleState::new(points)?)
}
