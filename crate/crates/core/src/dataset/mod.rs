//! Corpus generation: subsets of scenes rendered from many poses, written as
//! one directory per data point plus a JSONL manifest.

mod build;
mod progressive;
mod split;

pub use build::{
    build_corpus, build_subset, content_hash, generate_points, load_manifest, load_point, planned_count,
    encoded_files, regenerate_point, render_point, write_manifest, write_point, SubsetConfig,
};
pub use progressive::{progressive_grid, GridCell, Protocol};
pub use split::{split_assign, split_of, SplitRatios};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::GrayImage;
use crate::render::{CameraPose, LightSpec, RenderPlanes};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("subset k must be in [1, 6], got {0}")]
    SubsetRange(usize),
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    Ratios([f64; 3]),
    #[error(transparent)]
    Csg(#[from] crate::csg::CsgError),
    #[error(transparent)]
    Tam(#[from] crate::tam::TamError),
    #[error(transparent)]
    Raster(#[from] crate::raster::RasterError),
    #[error("failed writing {path}: {source} ({completed} scenes completed; partial manifest at {partial})")]
    Write {
        path: String,
        source: std::io::Error,
        completed: usize,
        partial: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("manifest line {line}: {source}")]
    Manifest { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LightRecord {
    pub direction: [f64; 3],
    pub azimuth: f64,
    pub elevation: f64,
}

impl LightRecord {
    pub fn from_spec(l: &LightSpec) -> Self {
        let (azimuth, elevation) = l.angles();
        let d = l.direction;
        Self {
            direction: [d.x, d.y, d.z],
            azimuth,
            elevation,
        }
    }

    pub fn spec(&self) -> LightSpec {
        LightSpec {
            direction: crate::math::Vec3::new(self.direction[0], self.direction[1], self.direction[2]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointSeeds {
    /// Master seed of the run.
    pub master: u64,
    pub scene: u64,
    pub pose: u64,
    pub crop: u64,
}

/// One manifest line; also stored as the data point's `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    /// Data point directory relative to the corpus root.
    pub path: String,
    pub k: usize,
    pub scene_id: u32,
    pub pose: u32,
    pub split: Split,
    pub light: LightRecord,
    pub tam_family_id: String,
    pub seeds: PointSeeds,
    pub camera: CameraPose,
    /// Number of solids actually in the scene (at most `k`).
    pub n_solids: usize,
    pub resolution: usize,
    pub background_hatch: bool,
    pub no_shadows: bool,
}

/// A rendered data point in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPoint {
    pub planes: RenderPlanes,
    /// Aligned crops of the scene's TAM, tone 1 (darkest) first.
    pub crops: [GrayImage; 4],
    pub meta: ManifestRow,
}

impl DataPoint {
    /// All invariants: planes, subset range, and crop nesting.
    pub fn check_invariants(&self) -> Result<(), String> {
        self.planes.check_invariants()?;
        if !(1..=crate::csg::MAX_SOLIDS).contains(&self.meta.k) {
            return Err(format!("subset k {} out of range", self.meta.k));
        }
        let report = crate::tam::validate_tam(&self.crops).map_err(|e| e.to_string())?;
        if report.max_violation > crate::tam::MAX_NESTING_VIOLATION {
            return Err(format!("texture crops violate nesting: {}", report.max_violation));
        }
        Ok(())
    }
}

/// Plane file stems in the on-disk layout.
pub const PLANE_NAMES: [&str; 8] = ["cnt", "ill", "hi", "mid", "sha", "shw", "sk", "dif"];
