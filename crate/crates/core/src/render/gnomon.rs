//! The canonical sundial gnomon whose shaded render encodes the light.
//!
//! Base: disc of radius 1.0 and thickness 0.05 resting on y = 0, centred on
//! the origin. Fin: right triangle with legs 1.0 along +z and 0.8 along +y,
//! 0.05 thick, standing on the disc in the x = 0 plane with its hypotenuse
//! facing +z. The canonical camera sits in the fin's plane so the object is
//! mirror-symmetric on screen.

use super::{trace_gbuffer, Camera, CameraPose, Geometry, LightSpec, RenderOptions};
use crate::math::Vec3;
use crate::raster::GrayImage;

pub const GNOMON_CAMERA_AZIMUTH: f64 = 0.0;
const CAMERA_ELEVATION: f64 = 35.0;
const CAMERA_DISTANCE: f64 = 4.0;
const CAMERA_FOV: f64 = 40.0;

const DISC_RADIUS: f64 = 1.0;
const DISC_HALF_THICKNESS: f64 = 0.025;
const FIN_LENGTH: f64 = 1.0;
const FIN_HEIGHT: f64 = 0.8;
const FIN_HALF_THICKNESS: f64 = 0.025;

#[derive(Debug, Clone, Copy, Default)]
pub struct Gnomon;

fn dot2(x: f64, y: f64) -> f64 {
    x * x + y * y
}

/// Exact 2D distance to the fin triangle in the (z, y) plane.
fn triangle_distance(pz: f64, py: f64) -> f64 {
    let base = 2.0 * DISC_HALF_THICKNESS;
    let v = [(0.0, base), (FIN_LENGTH, base), (0.0, base + FIN_HEIGHT)];
    let mut d = f64::INFINITY;
    let mut sign = 1.0f64;
    let mut inside_votes = 0;
    for k in 0..3 {
        let (ax, ay) = v[k];
        let (bx, by) = v[(k + 1) % 3];
        let (ex, ey) = (bx - ax, by - ay);
        let (wx, wy) = (pz - ax, py - ay);
        let t = ((wx * ex + wy * ey) / dot2(ex, ey)).clamp(0.0, 1.0);
        d = d.min(dot2(wx - ex * t, wy - ey * t));
        // Counter-clockwise winding: inside is left of every edge.
        if ex * wy - ey * wx >= 0.0 {
            inside_votes += 1;
        }
    }
    if inside_votes == 3 {
        sign = -1.0;
    }
    sign * d.sqrt()
}

impl Gnomon {
    fn disc_distance(p: Vec3) -> f64 {
        let q = Vec3::new(p.x, p.y - DISC_HALF_THICKNESS, p.z);
        let dx = q.length_xz() - DISC_RADIUS;
        let dy = q.y.abs() - DISC_HALF_THICKNESS;
        dx.max(dy).min(0.0) + (dx.max(0.0).powi(2) + dy.max(0.0).powi(2)).sqrt()
    }

    fn fin_distance(p: Vec3) -> f64 {
        let d2 = triangle_distance(p.z, p.y);
        let dx = p.x.abs() - FIN_HALF_THICKNESS;
        d2.max(dx).min(0.0) + (d2.max(0.0).powi(2) + dx.max(0.0).powi(2)).sqrt()
    }

    /// Point membership from the defining inequalities.
    pub fn contains(p: Vec3) -> bool {
        let in_disc = p.y >= 0.0 && p.y <= 2.0 * DISC_HALF_THICKNESS && p.length_xz() <= DISC_RADIUS;
        let yb = p.y - 2.0 * DISC_HALF_THICKNESS;
        let in_fin = p.x.abs() <= FIN_HALF_THICKNESS
            && p.z >= 0.0
            && yb >= 0.0
            && p.z / FIN_LENGTH + yb / FIN_HEIGHT <= 1.0;
        in_disc || in_fin
    }
}

impl Geometry for Gnomon {
    fn distance(&self, p: Vec3) -> f64 {
        Self::disc_distance(p).min(Self::fin_distance(p))
    }

    fn bounds(&self) -> (Vec3, f64) {
        (Vec3::new(0.0, 0.4, 0.0), 1.2)
    }
}

pub fn gnomon_camera_pose() -> CameraPose {
    CameraPose {
        azimuth: GNOMON_CAMERA_AZIMUTH,
        elevation: CAMERA_ELEVATION,
        distance: CAMERA_DISTANCE,
        fov_y: CAMERA_FOV,
    }
}

pub fn gnomon_camera(size: usize) -> Camera {
    Camera::look_at(&gnomon_camera_pose(), Vec3::ZERO, size, size)
}

/// Light as the scene camera sees it, re-expressed for the canonical camera.
pub fn hint_light_for_pose(world_light: &LightSpec, pose: &CameraPose) -> LightSpec {
    let (rel_az, el) = world_light.relative_to_camera(pose.azimuth);
    LightSpec {
        direction: super::direction_from_angles(GNOMON_CAMERA_AZIMUTH + rel_az, el),
    }
}

/// Diffuse + cast-shadow render of the gnomon from the canonical camera.
/// `light` is camera-relative: azimuth 0 is the viewing direction's back.
pub fn render_gnomon_hint(light: &LightSpec, size: usize) -> GrayImage {
    let opts = RenderOptions::square(size);
    let cam = gnomon_camera(size);
    trace_gbuffer(&Gnomon, None, &cam, light, &opts).dif
}
