//! Procedural scene sampler.
//!
//! Scenes are grown left-deep: `Scene := Solid | Op(Scene, Solid)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{leaf_min_y, BoolOp, CsgError, CsgNode, CsgScene, Primitive, PrimitiveKind, Transform, MAX_SOLIDS};
use crate::math::{Quat, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    /// Weights for union, difference, intersection.
    pub op_weights: [f64; 3],
    /// Weights over [`PrimitiveKind::ALL`].
    pub kind_weights: [f64; 5],
    /// Solid centroids are drawn from a disc of this radius about the origin.
    pub placement_radius: f64,
    pub scale_range: (f64, f64),
    /// Every scene fits in an origin-centred sphere of this radius.
    pub scene_radius: f64,
    /// Attempts at a non-empty difference/intersection before the op is dropped.
    pub max_retries: usize,
    /// Probability that a free-standing solid rests on the ground.
    pub rest_probability: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            op_weights: [0.5, 0.3, 0.2],
            kind_weights: [1.0; 5],
            placement_radius: 2.0,
            scale_range: (0.5, 1.5),
            scene_radius: 6.0,
            max_retries: 16,
            rest_probability: 0.5,
        }
    }
}

// Offsets of the dedicated ChaCha streams.
const STREAM_COUNT: u64 = 0;
const STREAM_PROBE: u64 = 1;
const STREAM_SOLIDS: u64 = 16;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn categorical<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

fn uniform_rotation<R: Rng>(rng: &mut R) -> Quat {
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let tau = std::f64::consts::TAU;
    Quat::new(
        (1.0 - u1).sqrt() * (tau * u2).sin(),
        (1.0 - u1).sqrt() * (tau * u2).cos(),
        u1.sqrt() * (tau * u3).sin(),
        u1.sqrt() * (tau * u3).cos(),
    )
    .normalized()
}

fn sample_primitive<R: Rng>(rng: &mut R, kind: PrimitiveKind) -> Primitive {
    match kind {
        PrimitiveKind::Sphere => Primitive::Sphere {
            radius: rng.random_range(0.5..1.0),
        },
        PrimitiveKind::Box => Primitive::Box {
            half: Vec3::new(
                rng.random_range(0.35..0.9),
                rng.random_range(0.35..0.9),
                rng.random_range(0.35..0.9),
            ),
        },
        PrimitiveKind::Cylinder => Primitive::Cylinder {
            radius: rng.random_range(0.3..0.8),
            half_height: rng.random_range(0.4..1.0),
        },
        PrimitiveKind::Cone => Primitive::Cone {
            radius: rng.random_range(0.4..0.9),
            half_height: rng.random_range(0.5..1.0),
        },
        PrimitiveKind::Torus => {
            let major = rng.random_range(0.55..0.9);
            Primitive::Torus {
                major,
                minor: major * rng.random_range(0.2..0.45),
            }
        }
    }
}

fn point_in_disc<R: Rng>(rng: &mut R, radius: f64) -> (f64, f64) {
    let r = radius * rng.random::<f64>().sqrt();
    let a = rng.random_range(0.0..std::f64::consts::TAU);
    (r * a.cos(), r * a.sin())
}

fn sample_leaf<R: Rng>(rng: &mut R, cfg: &SamplerConfig, partner: Option<&Transform>) -> CsgNode {
    loop {
        let kind = PrimitiveKind::ALL[categorical(rng, &cfg.kind_weights)];
        let primitive = sample_primitive(rng, kind);
        let scale = rng.random_range(cfg.scale_range.0..cfg.scale_range.1);
        let rotation = uniform_rotation(rng);
        let mut xf = Transform {
            translation: Vec3::ZERO,
            rotation,
            scale,
        };
        let ground_offset = -leaf_min_y(&primitive, &xf) + 1e-9;

        let (x, z) = match partner {
            // Boolean partners are placed near an existing solid so the
            // combination is rarely empty.
            Some(p) => {
                let (dx, dz) = point_in_disc(rng, 0.6);
                let (x, z) = (p.translation.x + dx, p.translation.z + dz);
                let r = (x * x + z * z).sqrt();
                if r > cfg.placement_radius {
                    (x * cfg.placement_radius / r, z * cfg.placement_radius / r)
                } else {
                    (x, z)
                }
            }
            None => point_in_disc(rng, cfg.placement_radius),
        };
        let y = match partner {
            Some(p) => ground_offset.max(p.translation.y + rng.random_range(-0.4..0.4)),
            None => {
                let clearance = if rng.random::<f64>() < cfg.rest_probability {
                    0.0
                } else {
                    rng.random_range(0.0..0.75)
                };
                ground_offset + clearance
            }
        };
        xf.translation = Vec3::new(x, y, z);

        let extent = xf.translation.length() + scale * primitive.bounding_radius();
        if extent <= cfg.scene_radius {
            return CsgNode::leaf(primitive, xf);
        }
    }
}

/// Interior depth a probe must reach for a solid to count as non-empty, so
/// slivers too thin to render are rejected.
const MIN_INTERIOR_DEPTH: f64 = 0.02;

/// Whether a fixed probe set finds a point well inside the solid.
fn is_nonempty(node: &CsgNode) -> bool {
    let inside = |p: Vec3| node.signed_distance(p) < -MIN_INTERIOR_DEPTH;
    let leaves = node.leaves();
    if leaves.iter().any(|(_, xf)| inside(xf.translation)) {
        return true;
    }
    let mut rng = stream(0, STREAM_PROBE);
    for (prim, xf) in &leaves {
        let r = xf.scale * prim.bounding_radius();
        for _ in 0..256 {
            let p = Vec3::new(
                rng.random_range(-r..r),
                rng.random_range(-r..r),
                rng.random_range(-r..r),
            );
            if inside(xf.translation + p) {
                return true;
            }
        }
    }
    false
}

/// Draws a scene deterministically from `(seed, max_solids, config)`.
pub fn sample_scene(seed: u64, max_solids: usize) -> Result<CsgScene, CsgError> {
    sample_scene_with(seed, max_solids, &SamplerConfig::default())
}

pub fn sample_scene_with(
    seed: u64,
    max_solids: usize,
    cfg: &SamplerConfig,
) -> Result<CsgScene, CsgError> {
    if !(1..=MAX_SOLIDS).contains(&max_solids) {
        return Err(CsgError::MaxSolidsOutOfRange(max_solids));
    }
    let n_solids = stream(seed, STREAM_COUNT).random_range(1..=max_solids);

    let mut rng = stream(seed, STREAM_SOLIDS);
    let mut root = sample_leaf(&mut rng, cfg, None);
    for i in 1..n_solids {
        for attempt in 0..=cfg.max_retries {
            let id = STREAM_SOLIDS + (i * (cfg.max_retries + 1) + attempt) as u64;
            let mut rng = stream(seed, id);
            let op = [BoolOp::Union, BoolOp::Difference, BoolOp::Intersection]
                [categorical(&mut rng, &cfg.op_weights)];
            let partner = match op {
                BoolOp::Union => None,
                _ => {
                    let leaves = root.leaves();
                    Some(*leaves[rng.random_range(0..leaves.len())].1)
                }
            };
            let leaf = sample_leaf(&mut rng, cfg, partner.as_ref());
            let candidate = CsgNode::op(op, root.clone(), leaf);
            if op == BoolOp::Union || is_nonempty(&candidate) {
                root = candidate;
                break;
            }
        }
    }

    Ok(CsgScene {
        root,
        ground_plane: 0.0,
        seed,
        max_solids,
    })
}
