//! Procedural sketch/shade/shadow data: CSG scenes, an NPR raytracer, tonal
//! art maps, corpus generation, and image metrics.

pub mod csg;
pub mod dataset;
pub mod math;
pub mod metrics;
pub mod raster;
pub mod render;
pub mod tam;

pub use csg::{parse_scene, sample_scene, serialize_scene, signed_distance, CsgScene};
pub use raster::{GrayImage, Mask};
pub use render::{render_gnomon_hint, CameraPose, LightSpec, RenderPlanes};
pub use tam::TamFamily;
