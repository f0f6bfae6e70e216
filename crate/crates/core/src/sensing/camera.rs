use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::SensingError;

/// Pinhole camera looking along body +x. Image `u` grows toward body −y,
/// image `v` toward body −z; the principal point is the image center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub hfov_deg: f64,
    pub vfov_deg: f64,
    pub width: u32,
    pub height: u32,
    /// Multiplier on both focal lengths (intrinsics randomization).
    #[serde(default = "one")]
    pub focal_scale: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            hfov_deg: 82.0,
            vfov_deg: 72.0,
            width: 320,
            height: 256,
            focal_scale: 1.0,
        }
    }
}

impl CameraModel {
    /// Wide camera used for the planner comparison.
    pub fn baseline() -> Self {
        Self {
            hfov_deg: 120.0,
            vfov_deg: 120.0,
            width: 512,
            height: 512,
            focal_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), SensingError> {
        let fov_ok = |f: f64| f.is_finite() && f > 0.0 && f < 180.0;
        if !fov_ok(self.hfov_deg) || !fov_ok(self.vfov_deg) {
            return Err(SensingError::InvalidCamera(format!(
                "field of view must lie in (0, 180) degrees, got {}x{}",
                self.hfov_deg, self.vfov_deg
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(SensingError::InvalidCamera("resolution must be positive".into()));
        }
        if !(self.focal_scale.is_finite() && self.focal_scale > 0.0) {
            return Err(SensingError::InvalidCamera(format!("focal scale {}", self.focal_scale)));
        }
        Ok(())
    }

    pub fn fx(&self) -> f64 {
        self.focal_scale * 0.5 * self.width as f64 / (0.5 * self.hfov_deg.to_radians()).tan()
    }

    pub fn fy(&self) -> f64 {
        self.focal_scale * 0.5 * self.height as f64 / (0.5 * self.vfov_deg.to_radians()).tan()
    }

    pub fn principal_point(&self) -> Vector2<f64> {
        Vector2::new(0.5 * self.width as f64, 0.5 * self.height as f64)
    }

    /// Continuous pixel coordinates of a body-frame point, or `None` when it
    /// is not in front of the camera. Pixel `(i, j)` covers `[i, i+1) × [j, j+1)`.
    pub fn project(&self, p_body: &Vector3<f64>) -> Option<Vector2<f64>> {
        if p_body.x <= 0.0 {
            return None;
        }
        let c = self.principal_point();
        Some(Vector2::new(
            c.x - self.fx() * p_body.y / p_body.x,
            c.y - self.fy() * p_body.z / p_body.x,
        ))
    }

    pub fn in_image(&self, px: &Vector2<f64>) -> bool {
        px.x >= 0.0 && px.y >= 0.0 && px.x < self.width as f64 && px.y < self.height as f64
    }

    /// Body-frame ray direction through the center of pixel `(u, v)` (x = 1).
    pub fn pixel_ray(&self, u: u32, v: u32) -> Vector3<f64> {
        let c = self.principal_point();
        Vector3::new(
            1.0,
            -(u as f64 + 0.5 - c.x) / self.fx(),
            -(v as f64 + 0.5 - c.y) / self.fy(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ray_and_projection_are_inverse() {
        let cam = CameraModel::default();
        for (u, v) in [(0, 0), (319, 255), (160, 128), (17, 201)] {
            let px = cam.project(&cam.pixel_ray(u, v)).unwrap();
            assert!((px - Vector2::new(u as f64 + 0.5, v as f64 + 0.5)).norm() < 1e-9);
        }
    }

    #[test]
    fn fov_edge_maps_to_image_edge() {
        let cam = CameraModel::default();
        let half = (41f64).to_radians();
        let px = cam.project(&Vector3::new(1.0, -half.tan(), 0.0)).unwrap();
        assert!((px.x - 320.0).abs() < 1e-9);
    }

    #[test]
    fn behind_is_unprojectable() {
        assert!(CameraModel::default().project(&Vector3::new(-1.0, 0.0, 0.0)).is_none());
    }
}
