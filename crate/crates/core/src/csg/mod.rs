//! Constructive solid geometry scenes: primitives, boolean trees, signed
//! distances, and point membership.

mod grammar;
mod sample;

pub use grammar::{parse_scene, serialize_scene, ParseError};
pub use sample::{sample_scene, sample_scene_with, SamplerConfig};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{Quat, Vec3};

/// Upper bound on the number of solids in a composition.
pub const MAX_SOLIDS: usize = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CsgError {
    #[error("max_solids must be in [1, {MAX_SOLIDS}], got {0}")]
    MaxSolidsOutOfRange(usize),
    #[error("invalid primitive: {0}")]
    InvalidPrimitive(String),
    #[error("invalid transform: {0}")]
    InvalidTransform(String),
    #[error("scene has {leaves} solids, more than the allowed {max}")]
    TooManySolids { leaves: usize, max: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrimitiveKind {
    Sphere,
    Box,
    Cylinder,
    Cone,
    Torus,
}

impl PrimitiveKind {
    pub const ALL: [PrimitiveKind; 5] = [
        PrimitiveKind::Sphere,
        PrimitiveKind::Box,
        PrimitiveKind::Cylinder,
        PrimitiveKind::Cone,
        PrimitiveKind::Torus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PrimitiveKind::Sphere => "sphere",
            PrimitiveKind::Box => "box",
            PrimitiveKind::Cylinder => "cylinder",
            PrimitiveKind::Cone => "cone",
            PrimitiveKind::Torus => "torus",
        }
    }
}

/// A solid in its local frame, centred at the origin.
///
/// Cylinders and cones are aligned with the local y axis and span
/// `[-half_height, half_height]`; the cone's base sits at `-half_height`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Primitive {
    Sphere { radius: f64 },
    Box { half: Vec3 },
    Cylinder { radius: f64, half_height: f64 },
    Cone { radius: f64, half_height: f64 },
    Torus { major: f64, minor: f64 },
}

impl Primitive {
    pub fn kind(&self) -> PrimitiveKind {
        match self {
            Primitive::Sphere { .. } => PrimitiveKind::Sphere,
            Primitive::Box { .. } => PrimitiveKind::Box,
            Primitive::Cylinder { .. } => PrimitiveKind::Cylinder,
            Primitive::Cone { .. } => PrimitiveKind::Cone,
            Primitive::Torus { .. } => PrimitiveKind::Torus,
        }
    }

    pub fn validate(&self) -> Result<(), CsgError> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(CsgError::InvalidPrimitive(format!(
                    "{} {name} must be strictly positive, got {v}",
                    self.kind().name()
                )))
            }
        };
        match *self {
            Primitive::Sphere { radius } => positive("r", radius),
            Primitive::Box { half } => {
                positive("hx", half.x)?;
                positive("hy", half.y)?;
                positive("hz", half.z)
            }
            Primitive::Cylinder {
                radius,
                half_height,
            }
            | Primitive::Cone {
                radius,
                half_height,
            } => {
                positive("r", radius)?;
                positive("h", half_height)
            }
            Primitive::Torus { major, minor } => {
                positive("major", major)?;
                positive("minor", minor)?;
                if minor >= major {
                    return Err(CsgError::InvalidPrimitive(format!(
                        "torus minor radius {minor} must be below major radius {major}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Exact signed distance in the local frame.
    pub fn signed_distance(&self, p: Vec3) -> f64 {
        match *self {
            Primitive::Sphere { radius } => p.length() - radius,
            Primitive::Box { half } => {
                let q = p.abs() - half;
                q.max(Vec3::ZERO).length() + q.max_elem().min(0.0)
            }
            Primitive::Cylinder {
                radius,
                half_height,
            } => {
                let dx = p.length_xz() - radius;
                let dy = p.y.abs() - half_height;
                let outside = (dx.max(0.0).powi(2) + dy.max(0.0).powi(2)).sqrt();
                dx.max(dy).min(0.0) + outside
            }
            Primitive::Cone {
                radius,
                half_height,
            } => capped_cone_distance(p, half_height, radius, 0.0),
            Primitive::Torus { major, minor } => {
                let qx = p.length_xz() - major;
                (qx * qx + p.y * p.y).sqrt() - minor
            }
        }
    }

    /// Closed-set membership from the defining inequalities, independent of
    /// the distance formulas.
    pub fn contains(&self, p: Vec3) -> bool {
        match *self {
            Primitive::Sphere { radius } => p.dot(p) <= radius * radius,
            Primitive::Box { half } => {
                p.x.abs() <= half.x && p.y.abs() <= half.y && p.z.abs() <= half.z
            }
            Primitive::Cylinder {
                radius,
                half_height,
            } => p.y.abs() <= half_height && p.x * p.x + p.z * p.z <= radius * radius,
            Primitive::Cone {
                radius,
                half_height,
            } => {
                if p.y.abs() > half_height {
                    return false;
                }
                let r_at = radius * (half_height - p.y) / (2.0 * half_height);
                p.x * p.x + p.z * p.z <= r_at * r_at
            }
            Primitive::Torus { major, minor } => {
                let rho = (p.x * p.x + p.z * p.z).sqrt();
                (rho - major).powi(2) + p.y * p.y <= minor * minor
            }
        }
    }

    /// Radius of the smallest origin-centred sphere enclosing the solid.
    pub fn bounding_radius(&self) -> f64 {
        match *self {
            Primitive::Sphere { radius } => radius,
            Primitive::Box { half } => half.length(),
            Primitive::Cylinder {
                radius,
                half_height,
            }
            | Primitive::Cone {
                radius,
                half_height,
            } => (radius * radius + half_height * half_height).sqrt(),
            Primitive::Torus { major, minor } => major + minor,
        }
    }

    /// Support function: max of `p . dir` over the solid, `dir` unit length.
    pub fn support(&self, dir: Vec3) -> f64 {
        match *self {
            Primitive::Sphere { radius } => radius,
            Primitive::Box { half } => {
                dir.x.abs() * half.x + dir.y.abs() * half.y + dir.z.abs() * half.z
            }
            Primitive::Cylinder {
                radius,
                half_height,
            } => radius * dir.length_xz() + half_height * dir.y.abs(),
            Primitive::Cone {
                radius,
                half_height,
            } => {
                let base = -half_height * dir.y + radius * dir.length_xz();
                let apex = half_height * dir.y;
                base.max(apex)
            }
            Primitive::Torus { major, minor } => major * dir.length_xz() + minor,
        }
    }
}

fn dot2(x: f64, y: f64) -> f64 {
    x * x + y * y
}

/// Exact distance to a capped cone along y with base radius `r1` at `-h`
/// and top radius `r2` at `+h`.
fn capped_cone_distance(p: Vec3, h: f64, r1: f64, r2: f64) -> f64 {
    let qx = p.length_xz();
    let qy = p.y;
    let (k1x, k1y) = (r2, h);
    let (k2x, k2y) = (r2 - r1, 2.0 * h);
    let cap_r = if qy < 0.0 { r1 } else { r2 };
    let cax = qx - qx.min(cap_r);
    let cay = qy.abs() - h;
    let t = (((k1x - qx) * k2x + (k1y - qy) * k2y) / dot2(k2x, k2y)).clamp(0.0, 1.0);
    let cbx = qx - k1x + k2x * t;
    let cby = qy - k1y + k2y * t;
    let s = if cbx < 0.0 && cay < 0.0 { -1.0 } else { 1.0 };
    s * dot2(cax, cay).min(dot2(cbx, cby)).sqrt()
}

/// Rigid motion plus uniform scale: `world = translation + rotation(scale * local)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    pub translation: Vec3,
    pub rotation: Quat,
    pub scale: f64,
}

impl Default for Transform {
    fn default() -> Self {
        Self {
            translation: Vec3::ZERO,
            rotation: Quat::IDENTITY,
            scale: 1.0,
        }
    }
}

impl Transform {
    pub fn translate(t: Vec3) -> Self {
        Self {
            translation: t,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), CsgError> {
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(CsgError::InvalidTransform(format!(
                "scale must be strictly positive, got {}",
                self.scale
            )));
        }
        if (self.rotation.norm() - 1.0).abs() > 1e-6 {
            return Err(CsgError::InvalidTransform(format!(
                "rotation quaternion must have unit norm, got {}",
                self.rotation.norm()
            )));
        }
        if !self.translation.is_finite() {
            return Err(CsgError::InvalidTransform("non-finite translation".into()));
        }
        Ok(())
    }

    pub fn to_local(&self, p: Vec3) -> Vec3 {
        self.rotation.inverse_rotate(p - self.translation) / self.scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoolOp {
    Union,
    Difference,
    Intersection,
}

impl BoolOp {
    pub fn name(self) -> &'static str {
        match self {
            BoolOp::Union => "union",
            BoolOp::Difference => "difference",
            BoolOp::Intersection => "intersection",
        }
    }

    pub fn combine_distance(self, a: f64, b: f64) -> f64 {
        match self {
            BoolOp::Union => a.min(b),
            BoolOp::Intersection => a.max(b),
            BoolOp::Difference => a.max(-b),
        }
    }

    pub fn combine_membership(self, a: bool, b: bool) -> bool {
        match self {
            BoolOp::Union => a || b,
            BoolOp::Intersection => a && b,
            BoolOp::Difference => a && !b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CsgNode {
    Leaf {
        primitive: Primitive,
        transform: Transform,
    },
    Op {
        op: BoolOp,
        left: Box<CsgNode>,
        right: Box<CsgNode>,
    },
}

impl CsgNode {
    pub fn leaf(primitive: Primitive, transform: Transform) -> Self {
        CsgNode::Leaf {
            primitive,
            transform,
        }
    }

    pub fn op(op: BoolOp, left: CsgNode, right: CsgNode) -> Self {
        CsgNode::Op {
            op,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            CsgNode::Leaf { .. } => 1,
            CsgNode::Op { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    pub fn leaves(&self) -> Vec<(&Primitive, &Transform)> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<(&'a Primitive, &'a Transform)>) {
        match self {
            CsgNode::Leaf {
                primitive,
                transform,
            } => out.push((primitive, transform)),
            CsgNode::Op { left, right, .. } => {
                left.collect_leaves(out);
                right.collect_leaves(out);
            }
        }
    }

    pub fn validate(&self) -> Result<(), CsgError> {
        match self {
            CsgNode::Leaf {
                primitive,
                transform,
            } => {
                primitive.validate()?;
                transform.validate()
            }
            CsgNode::Op { left, right, .. } => {
                left.validate()?;
                right.validate()
            }
        }
    }

    pub fn signed_distance(&self, p: Vec3) -> f64 {
        match self {
            CsgNode::Leaf {
                primitive,
                transform,
            } => transform.scale * primitive.signed_distance(transform.to_local(p)),
            CsgNode::Op { op, left, right } => {
                op.combine_distance(left.signed_distance(p), right.signed_distance(p))
            }
        }
    }

    pub fn contains(&self, p: Vec3) -> bool {
        match self {
            CsgNode::Leaf {
                primitive,
                transform,
            } => primitive.contains(transform.to_local(p)),
            CsgNode::Op { op, left, right } => {
                op.combine_membership(left.contains(p), right.contains(p))
            }
        }
    }

    /// Lowest world-space y reached by any leaf.
    pub fn min_y(&self) -> f64 {
        self.leaves()
            .into_iter()
            .map(|(prim, xf)| leaf_min_y(prim, xf))
            .fold(f64::INFINITY, f64::min)
    }
}

pub(crate) fn leaf_min_y(prim: &Primitive, xf: &Transform) -> f64 {
    let down_local = xf.rotation.inverse_rotate(-Vec3::Y);
    xf.translation.y - xf.scale * prim.support(down_local)
}

/// A complete procedurally generated scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsgScene {
    pub root: CsgNode,
    /// Height of the horizontal ground plane.
    pub ground_plane: f64,
    pub seed: u64,
    pub max_solids: usize,
}

impl CsgScene {
    pub fn new(root: CsgNode) -> Self {
        Self {
            root,
            ground_plane: 0.0,
            seed: 0,
            max_solids: MAX_SOLIDS,
        }
    }

    pub fn validate(&self) -> Result<(), CsgError> {
        if !(1..=MAX_SOLIDS).contains(&self.max_solids) {
            return Err(CsgError::MaxSolidsOutOfRange(self.max_solids));
        }
        self.root.validate()?;
        let leaves = self.root.leaf_count();
        if leaves > self.max_solids {
            return Err(CsgError::TooManySolids {
                leaves,
                max: self.max_solids,
            });
        }
        Ok(())
    }

    pub fn leaf_count(&self) -> usize {
        self.root.leaf_count()
    }

    pub fn signed_distance(&self, p: Vec3) -> f64 {
        self.root.signed_distance(p)
    }

    pub fn contains(&self, p: Vec3) -> bool {
        self.root.contains(p)
    }

    /// Sphere enclosing every leaf (hence every boolean combination of them).
    pub fn bounding_sphere(&self) -> (Vec3, f64) {
        let leaves = self.root.leaves();
        let n = leaves.len() as f64;
        let center = leaves
            .iter()
            .fold(Vec3::ZERO, |acc, (_, xf)| acc + xf.translation)
            / n;
        let radius = leaves
            .iter()
            .map(|(prim, xf)| (xf.translation - center).length() + xf.scale * prim.bounding_radius())
            .fold(0.0, f64::max);
        (center, radius)
    }

    /// Radius of the origin-centred sphere enclosing the scene.
    pub fn extent_radius(&self) -> f64 {
        self.root
            .leaves()
            .iter()
            .map(|(prim, xf)| xf.translation.length() + xf.scale * prim.bounding_radius())
            .fold(0.0, f64::max)
    }
}

/// Signed distance of the scene geometry at `point`; negative inside.
pub fn signed_distance(scene: &CsgScene, point: Vec3) -> f64 {
    scene.signed_distance(point)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_sphere() -> CsgScene {
        CsgScene::new(CsgNode::leaf(
            Primitive::Sphere { radius: 1.0 },
            Transform::default(),
        ))
    }

    #[test]
    fn unit_sphere_distances() {
        let s = unit_sphere();
        assert_eq!(signed_distance(&s, Vec3::ZERO), -1.0);
        assert_eq!(signed_distance(&s, Vec3::new(2.0, 0.0, 0.0)), 1.0);
    }

    #[test]
    fn scaled_leaf_distance_is_exact() {
        let s = CsgScene::new(CsgNode::leaf(
            Primitive::Sphere { radius: 1.0 },
            Transform {
                translation: Vec3::new(1.0, 2.0, 0.0),
                rotation: Quat::from_axis_angle(Vec3::Z, 0.4),
                scale: 2.0,
            },
        ));
        let d = s.signed_distance(Vec3::new(1.0, 5.0, 0.0));
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn box_and_torus_closed_forms() {
        let b = Primitive::Box {
            half: Vec3::new(1.0, 2.0, 3.0),
        };
        assert!((b.signed_distance(Vec3::new(2.0, 3.0, 0.0)) - 2f64.sqrt()).abs() < 1e-12);
        assert!((b.signed_distance(Vec3::ZERO) + 1.0).abs() < 1e-12);
        let t = Primitive::Torus {
            major: 2.0,
            minor: 0.5,
        };
        assert!((t.signed_distance(Vec3::new(2.0, 0.0, 0.0)) + 0.5).abs() < 1e-12);
        assert!((t.signed_distance(Vec3::ZERO) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn cone_distance_matches_geometry() {
        let c = Primitive::Cone {
            radius: 1.0,
            half_height: 1.0,
        };
        // Below the base centre.
        assert!((c.signed_distance(Vec3::new(0.0, -2.0, 0.0)) - 1.0).abs() < 1e-12);
        // Above the apex.
        assert!((c.signed_distance(Vec3::new(0.0, 2.0, 0.0)) - 1.0).abs() < 1e-12);
        // On the slanted side, midway: radius 0.5 at y = 0.
        assert!(c.signed_distance(Vec3::new(0.5, 0.0, 0.0)).abs() < 1e-12);
        assert!(c.signed_distance(Vec3::new(0.2, 0.0, 0.0)) < 0.0);
    }

    #[test]
    fn boolean_distance_rules() {
        assert_eq!(BoolOp::Union.combine_distance(1.0, -2.0), -2.0);
        assert_eq!(BoolOp::Intersection.combine_distance(1.0, -2.0), 1.0);
        assert_eq!(BoolOp::Difference.combine_distance(-1.0, -2.0), 2.0);
    }

    #[test]
    fn validation_rejects_bad_torus_and_scale() {
        let t = Primitive::Torus {
            major: 0.5,
            minor: 0.5,
        };
        assert!(t.validate().is_err());
        let xf = Transform {
            scale: 0.0,
            ..Transform::default()
        };
        assert!(xf.validate().is_err());
    }

    #[test]
    fn support_gives_lowest_point() {
        let c = Primitive::Cylinder {
            radius: 1.0,
            half_height: 2.0,
        };
        let xf = Transform {
            translation: Vec3::new(0.0, 5.0, 0.0),
            rotation: Quat::from_axis_angle(Vec3::X, std::f64::consts::FRAC_PI_2),
            scale: 1.0,
        };
        assert!((leaf_min_y(&c, &xf) - 4.0).abs() < 1e-12);
    }
}
