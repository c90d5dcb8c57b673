use nalgebra::{Matrix2x3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::RigidTransform;
use crate::{Error, Result};

/// Pinhole camera. `pose` maps world coordinates into the camera frame
/// (x right, y down, z forward).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub pose: RigidTransform,
}

impl CameraModel {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        pose: RigidTransform,
    ) -> Result<Self> {
        let camera = CameraModel {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            pose,
        };
        camera.validate()?;
        Ok(camera)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(Error::Config("camera focal lengths must be positive".into()));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(Error::Config("camera principal point must be finite".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("camera image size must be positive".into()));
        }
        Ok(())
    }

    /// Camera centered on the image with a horizontal field of view of `hfov` radians.
    pub fn centered(width: u32, height: u32, hfov: f64, pose: RigidTransform) -> Result<Self> {
        let f = 0.5 * width as f64 / (0.5 * hfov).tan();
        Self::new(f, f, 0.5 * width as f64, 0.5 * height as f64, width, height, pose)
    }

    /// Projects a point already expressed in the camera frame.
    pub fn project(&self, p: &Vector3<f64>) -> Result<Vector2<f64>> {
        if !(p.z > 0.0) {
            return Err(Error::Domain(format!(
                "cannot project point with depth {} (must be positive)",
                p.z
            )));
        }
        Ok(Vector2::new(
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        ))
    }

    pub fn project_world(&self, p: &Vector3<f64>) -> Result<Vector2<f64>> {
        self.project(&self.pose.apply(p))
    }

    /// d(pixel)/d(camera-frame point).
    pub fn projection_jacobian(&self, p: &Vector3<f64>) -> Matrix2x3<f64> {
        let iz = 1.0 / p.z;
        let iz2 = iz * iz;
        Matrix2x3::new(
            self.fx * iz,
            0.0,
            -self.fx * p.x * iz2,
            0.0,
            self.fy * iz,
            -self.fy * p.y * iz2,
        )
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        self.pose.inverse().translation
    }

    pub fn contains_pixel(&self, uv: &Vector2<f64>) -> bool {
        uv.x >= 0.0 && uv.y >= 0.0 && uv.x < self.width as f64 && uv.y < self.height as f64
    }

    /// True when a camera-frame direction projects inside the image.
    pub fn sees_direction(&self, dir_cam: &Vector3<f64>) -> bool {
        match self.project(dir_cam) {
            Ok(uv) => self.contains_pixel(&uv),
            Err(_) => false,
        }
    }
}
