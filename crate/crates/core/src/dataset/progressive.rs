//! Controlled input grids for progressive evaluation: each protocol varies
//! only its named factors across the grid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::csg::{sample_scene, CsgNode, CsgScene, Primitive, Transform};
use crate::math::Vec3;
use crate::raster::GrayImage;
use crate::render::{render_planes, CameraPose, LightSpec, PlaneFlags, RenderOptions, RenderPlanes};
use crate::tam::{crop, TamFamily};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Protocol {
    /// A cube under fixed light and texture; only the camera moves.
    #[serde(rename = "pose")]
    Pose,
    #[serde(rename = "pose+lit")]
    PoseLit,
    #[serde(rename = "pose+lit+shap")]
    PoseLitShape,
    #[serde(rename = "txr")]
    Texture,
    /// Full compositions of up to six solids.
    #[serde(rename = "all")]
    All,
}

impl Protocol {
    pub fn varies_light(self) -> bool {
        !matches!(self, Protocol::Pose)
    }

    pub fn varies_shape(self) -> bool {
        matches!(self, Protocol::PoseLitShape | Protocol::Texture | Protocol::All)
    }

    pub fn varies_texture(self) -> bool {
        matches!(self, Protocol::Texture | Protocol::All)
    }
}

impl std::str::FromStr for Protocol {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "pose" => Protocol::Pose,
            "pose+lit" => Protocol::PoseLit,
            "pose+lit+shap" => Protocol::PoseLitShape,
            "txr" => Protocol::Texture,
            "all" => Protocol::All,
            _ => return Err(format!("unknown protocol `{s}` (pose, pose+lit, pose+lit+shap, txr, all)")),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub row: usize,
    pub col: usize,
    pub scene: CsgScene,
    pub pose: CameraPose,
    pub light: LightSpec,
    pub tam_family_id: String,
    pub crop_seed: u64,
    pub planes: RenderPlanes,
    pub crops: [GrayImage; 4],
}

fn cube() -> CsgScene {
    CsgScene::new(CsgNode::leaf(
        Primitive::Box {
            half: Vec3::splat(0.7),
        },
        Transform::translate(Vec3::new(0.0, 0.7, 0.0)),
    ))
}

/// Renders a `rows x cols` grid for `protocol`.
pub fn progressive_grid(
    protocol: Protocol,
    rows: usize,
    cols: usize,
    seed: u64,
    catalog: &[TamFamily],
    resolution: usize,
) -> Result<Vec<GridCell>, DatasetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base_light = LightSpec::from_angles(300.0, 45.0).expect("valid light");
    let base_family = 0usize;
    let base_crop = seed;
    let base_scene = cube();
    let opts = RenderOptions::square(resolution);
    let n = rows * cols;
    let mut cells = Vec::with_capacity(n);
    for i in 0..n {
        let (row, col) = (i / cols, i % cols);
        let scene = if protocol == Protocol::All {
            sample_scene(seed.wrapping_add(i as u64), 6)?
        } else if protocol.varies_shape() {
            sample_scene(seed.wrapping_add(i as u64), 1)?
        } else {
            base_scene.clone()
        };
        let light = if protocol.varies_light() {
            LightSpec::from_angles(rng.random_range(0.0..360.0), rng.random_range(20.0..70.0)).expect("valid light")
        } else {
            base_light
        };
        let (family, crop_seed) = if protocol.varies_texture() {
            (rng.random_range(0..catalog.len()), rng.random::<u64>())
        } else {
            (base_family, base_crop)
        };
        let az = (col as f64 + 0.5) * 360.0 / cols as f64;
        let el = if rows > 1 {
            15.0 + 50.0 * row as f64 / (rows - 1) as f64
        } else {
            35.0
        };
        let pose = CameraPose::framing(az, el, scene.bounding_sphere().1);
        let fam = &catalog[family];
        let crops = crop(fam, crop_seed, resolution)?;
        let planes = render_planes(&scene, &pose, &light, &crops, PlaneFlags::default(), &opts);
        cells.push(GridCell {
            row,
            col,
            scene,
            pose,
            light,
            tam_family_id: fam.id.clone(),
            crop_seed,
            planes,
            crops,
        });
    }
    Ok(cells)
}
