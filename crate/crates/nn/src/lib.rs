//! Generators, discriminators, losses, training and evaluation for sketch
//! completion, on CPU tensors.

pub mod bundle;
pub mod checkpoint;
pub mod classifier;
pub mod data;
pub mod eval;
pub mod layers;
pub mod loss;
pub mod patch;
pub mod patchgan;
pub mod train;
pub mod unet;

pub use bundle::{Architecture, Bundle, BundleSpec, Inputs, ModelId, ModelKind};
pub use classifier::SketchClassifier;
pub use data::{Batch, Sample};
pub use layers::Pass;
pub use train::{TrainConfig, Trainer};
