use crate::math::{Quat, Vec3};
use nalgebra::{Matrix3, Rotation3, UnitQuaternion};

/// Pinhole camera. Camera frame follows the usual vision convention
/// (x right, y down, z forward); `orientation`/`position` map camera
/// coordinates to world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub position: Vec3,
    pub orientation: Quat,
}

impl Camera {
    /// Camera at `eye` looking at `target`; `up` is the world direction that
    /// should appear upward in the image.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, width: usize, height: usize, focal: f64) -> Self {
        let z = (target - eye).normalize();
        let mut u = up - z * up.dot(&z);
        if u.norm() < 1e-9 {
            u = Vec3::y() - z * z.y;
        }
        let y = -u.normalize();
        let x = y.cross(&z);
        let rot = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z]));
        Self {
            fx: focal,
            fy: focal,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
            width,
            height,
            position: eye,
            orientation: UnitQuaternion::from_rotation_matrix(&rot),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err("focal lengths must be positive".into());
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) || self.width == 0 || self.height == 0 {
            return Err("bad principal point or image size".into());
        }
        Ok(())
    }

    /// World point of pixel (u, v) at z-depth `depth`.
    pub fn back_project(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        let pc = Vec3::new((u - self.cx) * depth / self.fx, (v - self.cy) * depth / self.fy, depth);
        self.orientation * pc + self.position
    }

    pub fn to_camera(&self, p: &Vec3) -> Vec3 {
        self.orientation.inverse() * (p - self.position)
    }

    /// Pixel coordinates and z-depth; `None` behind the camera.
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64, f64)> {
        let c = self.to_camera(p);
        if c.z <= 1e-9 {
            return None;
        }
        Some((self.fx * c.x / c.z + self.cx, self.fy * c.y / c.z + self.cy, c.z))
    }

    /// Unnormalized world ray direction through pixel (u, v) with unit
    /// camera-z component.
    pub fn ray(&self, u: f64, v: f64) -> Vec3 {
        self.orientation * Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }
}
