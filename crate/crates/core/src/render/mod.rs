//! Non-photorealistic raytracer producing the registered image planes of a
//! data point.

mod camera;
mod contour;
mod gnomon;
mod hatch;
mod trace;

pub use camera::{direction_from_angles, Camera, CameraPose, LightSpec, PoseError, DEFAULT_FOV, MIN_LIGHT_Y};
pub use contour::{extract_contours, thin, ContourParams};
pub use gnomon::{gnomon_camera_pose, hint_light_for_pose, render_gnomon_hint, Gnomon, GNOMON_CAMERA_AZIMUTH};
pub use hatch::{render_hatch, tone_bin, HATCH_BINS};
pub use trace::{ray_sphere, Geometry, March, TraceParams, Tracer};

use crate::csg::CsgScene;
use crate::math::Vec3;
use crate::raster::{Dims, GrayImage, Mask};

/// Diffuse-intensity cut points for the three on-object masks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskThresholds {
    pub highlight: f32,
    pub shade: f32,
}

impl Default for MaskThresholds {
    fn default() -> Self {
        Self {
            highlight: 0.75,
            shade: 0.40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    pub width: usize,
    pub height: usize,
    pub trace: TraceParams,
    pub thresholds: MaskThresholds,
    pub contour: ContourParams,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self::square(256)
    }
}

impl RenderOptions {
    pub fn square(size: usize) -> Self {
        Self {
            width: size,
            height: size,
            trace: TraceParams::default(),
            thresholds: MaskThresholds::default(),
            contour: ContourParams::default(),
        }
    }
}

/// Per-pixel outputs of one primary + shadow ray pass.
#[derive(Debug, Clone)]
pub struct GBuffer {
    pub width: usize,
    pub height: usize,
    /// Lambert term times light visibility; 0 off-object.
    pub dif: GrayImage,
    pub coverage: Mask,
    /// Distance along the primary ray; infinite off-object.
    pub depth: Vec<f64>,
    pub normals: Vec<Vec3>,
    /// Pixels showing the ground plane.
    pub ground: Mask,
    /// Ground pixels whose path to the light is blocked.
    pub shadow: Mask,
    /// Primary rays that ran out of steps (rendered as misses).
    pub nonconvergent: usize,
}

#[derive(Clone, Copy)]
struct PixelSample {
    dif: f32,
    hit: bool,
    depth: f64,
    normal: Vec3,
    ground: bool,
    shadow: bool,
    nonconvergent: bool,
}

#[cfg(feature = "parallel")]
fn map_rows<T: Send>(height: usize, f: impl Fn(usize) -> Vec<T> + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    (0..height).into_par_iter().flat_map_iter(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_rows<T: Send>(height: usize, f: impl Fn(usize) -> Vec<T> + Sync + Send) -> Vec<T> {
    (0..height).flat_map(f).collect()
}

/// Traces every pixel: diffuse shading with cast shadows on the geometry,
/// plus ground visibility and ground shadows when `ground` is set.
pub fn trace_gbuffer<G: Geometry + ?Sized>(
    geometry: &G,
    ground: Option<f64>,
    camera: &Camera,
    light: &LightSpec,
    opts: &RenderOptions,
) -> GBuffer {
    let tracer = Tracer::new(geometry, opts.trace);
    let l = light.direction;
    let offset = 2.0 * tracer.eps;
    let width = opts.width;
    let half_pixel = camera.tan_half_fov() / opts.height as f64;
    let samples = map_rows(opts.height, |y| {
        (0..width)
            .map(|x| {
                let dir = camera.ray(x, y);
                let mut s = PixelSample {
                    dif: 0.0,
                    hit: false,
                    depth: f64::INFINITY,
                    normal: Vec3::ZERO,
                    ground: false,
                    shadow: false,
                    nonconvergent: false,
                };
                match tracer.march_cone(camera.origin, dir, 0.0, half_pixel) {
                    March::Hit(t) => {
                        let p = camera.origin + dir * t;
                        let n = tracer.normal(p);
                        let lambert = n.dot(l).max(0.0);
                        let lit = lambert > 0.0 && !tracer.occluded(p + n * offset, l);
                        s.hit = true;
                        s.depth = t;
                        s.normal = n;
                        s.dif = if lit { lambert as f32 } else { 0.0 };
                        return s;
                    }
                    March::NonConvergent => s.nonconvergent = true,
                    March::Miss => {}
                }
                if let Some(g) = ground {
                    if dir.y < 0.0 {
                        let t = (g - camera.origin.y) / dir.y;
                        if t > 0.0 {
                            let p = camera.origin + dir * t;
                            s.ground = true;
                            s.shadow = tracer.occluded(p + Vec3::Y * offset, l);
                        }
                    }
                }
                s
            })
            .collect()
    });

    let n = samples.len();
    let mut out = GBuffer {
        width,
        height: opts.height,
        dif: GrayImage::new(width, opts.height),
        coverage: Mask::new(width, opts.height),
        depth: Vec::with_capacity(n),
        normals: Vec::with_capacity(n),
        ground: Mask::new(width, opts.height),
        shadow: Mask::new(width, opts.height),
        nonconvergent: 0,
    };
    for (i, s) in samples.into_iter().enumerate() {
        out.dif.data[i] = s.dif;
        out.coverage.data[i] = s.hit;
        out.depth.push(s.depth);
        out.normals.push(s.normal);
        out.ground.data[i] = s.ground;
        out.shadow.data[i] = s.shadow;
        out.nonconvergent += s.nonconvergent as usize;
    }
    out
}

pub fn scene_camera(scene: &CsgScene, pose: &CameraPose, opts: &RenderOptions) -> Camera {
    let (center, _) = scene.bounding_sphere();
    Camera::look_at(pose, center, opts.width, opts.height)
}

/// Diffuse render with coverage, depth and normal buffers.
pub fn render_diffuse(scene: &CsgScene, pose: &CameraPose, light: &LightSpec, opts: &RenderOptions) -> GBuffer {
    let cam = scene_camera(scene, pose, opts);
    trace_gbuffer(scene, Some(scene.ground_plane), &cam, light, opts)
}

/// Ground pixels in the scene's cast shadow.
pub fn render_shadow_mask(scene: &CsgScene, pose: &CameraPose, light: &LightSpec, opts: &RenderOptions) -> Mask {
    render_diffuse(scene, pose, light, opts).shadow
}

/// Splits object coverage into highlight, midtone and shade by thresholding
/// the diffuse intensity.
pub fn quantize_masks(dif: &GrayImage, coverage: &Mask, th: &MaskThresholds) -> (Mask, Mask, Mask) {
    assert!(dif.same_size(coverage), "dif and coverage sizes differ");
    let (w, h) = coverage.dims();
    let mut hi = Mask::new(w, h);
    let mut mid = Mask::new(w, h);
    let mut sha = Mask::new(w, h);
    for (i, (&d, &c)) in dif.data.iter().zip(&coverage.data).enumerate() {
        if !c {
            continue;
        }
        if d >= th.highlight {
            hi.data[i] = true;
        } else if d >= th.shade {
            mid.data[i] = true;
        } else {
            sha.data[i] = true;
        }
    }
    (hi, mid, sha)
}

/// The eight registered planes of a data point plus the object coverage.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderPlanes {
    pub dif: GrayImage,
    pub hi: Mask,
    pub mid: Mask,
    pub sha: Mask,
    pub shw: Mask,
    /// Contour strokes (set = stroke).
    pub cnt: Mask,
    pub ill: GrayImage,
    pub sk: GrayImage,
    pub coverage: Mask,
}

impl RenderPlanes {
    /// Checks mask partition and disjointness; returns a description of the
    /// first violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        let n = self.coverage.data.len();
        for i in 0..n {
            let (h, m, s) = (self.hi.data[i], self.mid.data[i], self.sha.data[i]);
            let on = h as u8 + m as u8 + s as u8;
            if on > 1 {
                return Err(format!("pixel {i}: on-object masks overlap"));
            }
            if (on == 1) != self.coverage.data[i] {
                return Err(format!("pixel {i}: hi/mid/sha union differs from coverage"));
            }
            if self.shw.data[i] && self.coverage.data[i] {
                return Err(format!("pixel {i}: shadow mask overlaps the object"));
            }
        }
        Ok(())
    }

    /// Contour plane as an image: black strokes on white.
    pub fn contour_image(&self) -> GrayImage {
        contour_to_image(&self.cnt)
    }
}

pub fn contour_to_image(cnt: &Mask) -> GrayImage {
    GrayImage {
        width: cnt.width,
        height: cnt.height,
        data: cnt.data.iter().map(|b| if *b { 0.0 } else { 1.0 }).collect(),
    }
}

/// Settings that alter plane content without changing geometry.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlaneFlags {
    pub background_hatch: bool,
    pub no_shadows: bool,
}

/// Renders all planes of one (scene, pose, light, texture) combination.
pub fn render_planes(
    scene: &CsgScene,
    pose: &CameraPose,
    light: &LightSpec,
    tones: &[GrayImage; 4],
    flags: PlaneFlags,
    opts: &RenderOptions,
) -> RenderPlanes {
    let gb = render_diffuse(scene, pose, light, opts);
    let (hi, mid, sha) = quantize_masks(&gb.dif, &gb.coverage, &opts.thresholds);
    let shw = if flags.no_shadows {
        Mask::new(gb.width, gb.height)
    } else {
        gb.shadow.clone()
    };
    let cnt = extract_contours(&gb, &opts.contour, scene.bounding_sphere().1);
    let hint_light = hint_light_for_pose(light, pose);
    let ill = render_gnomon_hint(&hint_light, opts.width);
    let sk = render_hatch(&gb.dif, &gb.coverage, &shw, &cnt, tones, flags.background_hatch);
    RenderPlanes {
        dif: gb.dif,
        hi,
        mid,
        sha,
        shw,
        cnt,
        ill,
        sk,
        coverage: gb.coverage,
    }
}
