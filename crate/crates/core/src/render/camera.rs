use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{deg_to_rad, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoseError {
    #[error("azimuth must be in [0, 360), got {0}")]
    Azimuth(f64),
    #[error("elevation must be in [10, 80], got {0}")]
    Elevation(f64),
    #[error("camera distance {distance} must exceed the scene bounding radius {radius}")]
    TooClose { distance: f64, radius: f64 },
    #[error("field of view must be in (0, 180), got {0}")]
    Fov(f64),
    #[error("light direction must be unit length and above the horizon (y > {min}), got {dir:?}")]
    Light { dir: Vec3, min: f64 },
    #[error("light elevation must be in (0, 90], got {0}")]
    LightElevation(f64),
}

/// Unit vector on the upper hemisphere from azimuth (0 points along +z,
/// increasing toward +x) and elevation above the horizon, both in degrees.
pub fn direction_from_angles(azimuth: f64, elevation: f64) -> Vec3 {
    // Wrapping to (-180, 180] keeps `a` and `-a` exact mirrors.
    let mut azimuth = azimuth.rem_euclid(360.0);
    if azimuth > 180.0 {
        azimuth -= 360.0;
    }
    let (az, el) = (deg_to_rad(azimuth), deg_to_rad(elevation));
    Vec3::new(el.cos() * az.sin(), el.sin(), el.cos() * az.cos())
}

/// Orbit camera around the scene centroid; angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub azimuth: f64,
    pub elevation: f64,
    pub distance: f64,
    pub fov_y: f64,
}

pub const DEFAULT_FOV: f64 = 40.0;

impl CameraPose {
    /// Pose at the given angles whose frustum contains a sphere of `radius`.
    pub fn framing(azimuth: f64, elevation: f64, radius: f64) -> Self {
        let fov_y = DEFAULT_FOV;
        let distance = 1.02 * radius / deg_to_rad(fov_y / 2.0).sin();
        Self {
            azimuth,
            elevation,
            distance,
            fov_y,
        }
    }

    pub fn validate(&self, scene_radius: f64) -> Result<(), PoseError> {
        if !(0.0..360.0).contains(&self.azimuth) {
            return Err(PoseError::Azimuth(self.azimuth));
        }
        if !(10.0..=80.0).contains(&self.elevation) {
            return Err(PoseError::Elevation(self.elevation));
        }
        if !(self.fov_y > 0.0 && self.fov_y < 180.0) {
            return Err(PoseError::Fov(self.fov_y));
        }
        if self.distance <= scene_radius {
            return Err(PoseError::TooClose {
                distance: self.distance,
                radius: scene_radius,
            });
        }
        Ok(())
    }
}

/// Directional light; `direction` points from the scene toward the light.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LightSpec {
    pub direction: Vec3,
}

pub const MIN_LIGHT_Y: f64 = 0.05;

impl LightSpec {
    pub fn new(direction: Vec3) -> Result<Self, PoseError> {
        let l = Self { direction };
        l.validate()?;
        Ok(l)
    }

    pub fn from_angles(azimuth: f64, elevation: f64) -> Result<Self, PoseError> {
        if !(elevation > 0.0 && elevation <= 90.0) {
            return Err(PoseError::LightElevation(elevation));
        }
        Self::new(direction_from_angles(azimuth, elevation))
    }

    pub fn validate(&self) -> Result<(), PoseError> {
        let d = self.direction;
        if !d.is_finite() || (d.length() - 1.0).abs() > 1e-9 || d.y <= MIN_LIGHT_Y {
            return Err(PoseError::Light { dir: d, min: MIN_LIGHT_Y });
        }
        Ok(())
    }

    /// `(azimuth, elevation)` in degrees, azimuth in `[0, 360)`.
    pub fn angles(&self) -> (f64, f64) {
        let d = self.direction;
        let el = d.y.clamp(-1.0, 1.0).asin().to_degrees();
        let az = d.x.atan2(d.z).to_degrees().rem_euclid(360.0);
        (az, el)
    }

    /// The light as seen from a camera orbiting at `camera_azimuth`: the
    /// horizontal angle is taken relative to the camera, elevation kept.
    pub fn relative_to_camera(&self, camera_azimuth: f64) -> (f64, f64) {
        let (az, el) = self.angles();
        let mut rel = (az - camera_azimuth).rem_euclid(360.0);
        if rel >= 180.0 {
            rel -= 360.0;
        }
        (rel, el)
    }
}

/// Pinhole camera looking at `target`.
#[derive(Debug, Clone, Copy)]
pub struct Camera {
    pub origin: Vec3,
    pub forward: Vec3,
    pub right: Vec3,
    pub up: Vec3,
    tan_half: f64,
    width: usize,
    height: usize,
}

impl Camera {
    pub fn look_at(pose: &CameraPose, target: Vec3, width: usize, height: usize) -> Self {
        let origin = target + direction_from_angles(pose.azimuth, pose.elevation) * pose.distance;
        let forward = (target - origin).normalized();
        let right = forward.cross(Vec3::Y).normalized();
        let up = right.cross(forward);
        Self {
            origin,
            forward,
            right,
            up,
            tan_half: deg_to_rad(pose.fov_y / 2.0).tan(),
            width,
            height,
        }
    }

    /// Unit ray direction through the centre of pixel `(x, y)`; y grows downward.
    pub fn ray(&self, x: usize, y: usize) -> Vec3 {
        let aspect = self.width as f64 / self.height as f64;
        // Integer offsets keep mirrored pixels exactly antisymmetric.
        let u = (2 * x as i64 + 1 - self.width as i64) as f64 / self.width as f64 * self.tan_half * aspect;
        let v = (self.height as i64 - 2 * y as i64 - 1) as f64 / self.height as f64 * self.tan_half;
        (self.forward + self.right * u + self.up * v).normalized()
    }

    /// Continuous pixel coordinates of a world point (pixel centres at +0.5).
    pub fn project(&self, p: Vec3) -> Option<(f64, f64)> {
        let d = p - self.origin;
        let z = d.dot(self.forward);
        if z <= 0.0 {
            return None;
        }
        let aspect = self.width as f64 / self.height as f64;
        let u = d.dot(self.right) / z / (self.tan_half * aspect);
        let v = d.dot(self.up) / z / self.tan_half;
        Some((
            (u + 1.0) * 0.5 * self.width as f64,
            (1.0 - v) * 0.5 * self.height as f64,
        ))
    }

    pub fn tan_half_fov(&self) -> f64 {
        self.tan_half
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn light_angles_round_trip() {
        let l = LightSpec::from_angles(123.0, 40.0).unwrap();
        let (az, el) = l.angles();
        assert!((az - 123.0).abs() < 1e-9 && (el - 40.0).abs() < 1e-9);
        assert_eq!(l.relative_to_camera(100.0).0.round(), 23.0);
        assert_eq!(l.relative_to_camera(200.0).0.round(), -77.0);
    }

    #[test]
    fn light_must_be_above_horizon() {
        assert!(LightSpec::from_angles(10.0, 0.0).is_err());
        assert!(LightSpec::new(Vec3::new(0.0, 0.01, 1.0).normalized()).is_err());
        assert!(LightSpec::new(Vec3::Y).is_ok());
    }

    #[test]
    fn projection_inverts_rays() {
        let pose = CameraPose::framing(30.0, 35.0, 2.0);
        let cam = Camera::look_at(&pose, Vec3::new(0.0, 1.0, 0.0), 64, 48);
        let dir = cam.ray(10, 20);
        let (px, py) = cam.project(cam.origin + dir * 3.0).unwrap();
        assert!((px - 10.5).abs() < 1e-9 && (py - 20.5).abs() < 1e-9);
    }

    #[test]
    fn pose_validation() {
        let pose = CameraPose::framing(0.0, 35.0, 2.0);
        assert!(pose.validate(2.0).is_ok());
        assert!(CameraPose { elevation: 5.0, ..pose }.validate(2.0).is_err());
        assert!(CameraPose { azimuth: 360.0, ..pose }.validate(2.0).is_err());
        assert!(CameraPose { distance: 1.0, ..pose }.validate(2.0).is_err());
    }
}
