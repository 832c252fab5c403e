//! Sphere tracing against signed distance fields.

use crate::csg::CsgScene;
use crate::math::Vec3;

/// Anything the tracer can march against.
pub trait Geometry: Sync {
    fn distance(&self, p: Vec3) -> f64;
    /// Centre and radius of a sphere enclosing the geometry.
    fn bounds(&self) -> (Vec3, f64);
}

impl Geometry for CsgScene {
    fn distance(&self, p: Vec3) -> f64 {
        self.signed_distance(p)
    }

    fn bounds(&self) -> (Vec3, f64) {
        self.bounding_sphere()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceParams {
    pub max_steps: usize,
    /// Hit threshold as a fraction of the geometry's bounding radius.
    pub eps_rel: f64,
}

impl Default for TraceParams {
    fn default() -> Self {
        Self {
            max_steps: 256,
            eps_rel: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum March {
    Hit(f64),
    Miss,
    /// Step budget exhausted before a hit or an exit.
    NonConvergent,
}

/// Parameter interval where the ray is inside the sphere, if any.
pub fn ray_sphere(origin: Vec3, dir: Vec3, center: Vec3, radius: f64) -> Option<(f64, f64)> {
    let oc = origin - center;
    let b = oc.dot(dir);
    let c = oc.dot(oc) - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    Some((-b - s, -b + s))
}

pub struct Tracer<'a, G: Geometry + ?Sized> {
    pub geometry: &'a G,
    pub params: TraceParams,
    center: Vec3,
    radius: f64,
    pub eps: f64,
}

impl<'a, G: Geometry + ?Sized> Tracer<'a, G> {
    pub fn new(geometry: &'a G, params: TraceParams) -> Self {
        let (center, radius) = geometry.bounds();
        // Slack so surfaces on the bound are still reached.
        let radius = radius * 1.001 + 1e-6;
        Self {
            geometry,
            params,
            center,
            radius,
            eps: params.eps_rel * radius,
        }
    }

    pub fn march(&self, origin: Vec3, dir: Vec3, t_min: f64) -> March {
        self.march_cone(origin, dir, t_min, 0.0)
    }

    /// Like [`Tracer::march`], for a ray standing for a cone of half-angle
    /// `cone` (radians, small-angle). A ray that exhausts its budget while
    /// within the cone's footprint of the surface is a grazing miss resolved
    /// below pixel size, not a non-convergent one.
    pub fn march_cone(&self, origin: Vec3, dir: Vec3, t_min: f64, cone: f64) -> March {
        let Some((t0, t1)) = ray_sphere(origin, dir, self.center, self.radius) else {
            return March::Miss;
        };
        if t1 < t_min {
            return March::Miss;
        }
        let mut t = t0.max(t_min);
        for _ in 0..self.params.max_steps {
            let d = self.geometry.distance(origin + dir * t);
            if d < self.eps {
                return March::Hit(t);
            }
            t += d;
            if t > t1 {
                return March::Miss;
            }
        }
        if self.geometry.distance(origin + dir * t) < t * cone {
            March::Miss
        } else {
            March::NonConvergent
        }
    }

    /// Whether anything blocks the path from `p` toward the directional light.
    pub fn occluded(&self, p: Vec3, light: Vec3) -> bool {
        matches!(self.march(p, light, 0.0), March::Hit(_))
    }

    /// Central-difference gradient, normalised.
    pub fn normal(&self, p: Vec3) -> Vec3 {
        let h = self.eps;
        let g = &self.geometry;
        Vec3::new(
            g.distance(p + Vec3::X * h) - g.distance(p - Vec3::X * h),
            g.distance(p + Vec3::Y * h) - g.distance(p - Vec3::Y * h),
            g.distance(p + Vec3::Z * h) - g.distance(p - Vec3::Z * h),
        )
        .normalized()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csg::{CsgNode, Primitive, Transform};

    fn sphere() -> CsgScene {
        CsgScene::new(CsgNode::leaf(
            Primitive::Sphere { radius: 1.0 },
            Transform::default(),
        ))
    }

    #[test]
    fn hits_sphere_front() {
        let s = sphere();
        let tr = Tracer::new(&s, TraceParams::default());
        match tr.march(Vec3::new(0.0, 0.0, 5.0), -Vec3::Z, 0.0) {
            March::Hit(t) => assert!((t - 4.0).abs() < 1e-3),
            other => panic!("{other:?}"),
        }
        assert_eq!(tr.march(Vec3::new(0.0, 3.0, 5.0), -Vec3::Z, 0.0), March::Miss);
        let n = tr.normal(Vec3::new(0.0, 0.0, 1.0));
        assert!((n - Vec3::Z).length() < 1e-6);
    }
}
