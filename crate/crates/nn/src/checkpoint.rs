//! Self-describing checkpoints: safetensors payload whose header metadata
//! carries the bundle spec and the network layout it implies.

use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use safetensors::tensor::{Dtype, TensorView};
use safetensors::SafeTensors;
use thiserror::Error;

use crate::bundle::{Bundle, BundleSpec, NetworkLayout};

pub const FORMAT: &str = "shad3s-bundle";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a model checkpoint: {0}")]
    Format(String),
    #[error("checkpoint version {found} is not supported (expected {VERSION})")]
    Version { found: String },
    #[error("checkpoint wiring does not match its spec: {0}")]
    Wiring(String),
    #[error("tensor `{name}`: {problem}")]
    Tensor { name: String, problem: String },
    #[error(transparent)]
    Safetensors(#[from] safetensors::SafeTensorError),
    #[error(transparent)]
    Candle(#[from] candle_core::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub fn to_bytes(bundle: &Bundle) -> Result<Vec<u8>, CheckpointError> {
    let mut raw: Vec<(String, Vec<usize>, Vec<u8>)> = Vec::new();
    for (name, t) in bundle.named_tensors() {
        let values = t.flatten_all()?.to_dtype(DType::F32)?.to_vec1::<f32>()?;
        let bytes = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        raw.push((name, t.dims().to_vec(), bytes));
    }
    let views = raw
        .iter()
        .map(|(n, s, b)| Ok((n.as_str(), TensorView::new(Dtype::F32, s.clone(), b)?)))
        .collect::<Result<Vec<_>, safetensors::SafeTensorError>>()?;
    let meta = HashMap::from([
        ("format".to_string(), FORMAT.to_string()),
        ("version".to_string(), VERSION.to_string()),
        ("spec".to_string(), serde_json::to_string(&bundle.spec)?),
        ("layout".to_string(), serde_json::to_string(&bundle.spec.layout())?),
    ]);
    Ok(safetensors::serialize(views, Some(meta))?)
}

pub fn save(bundle: &Bundle, path: &Path) -> Result<(), CheckpointError> {
    std::fs::write(path, to_bytes(bundle)?)?;
    Ok(())
}

/// Reads only the spec from a checkpoint header.
pub fn read_spec(bytes: &[u8]) -> Result<BundleSpec, CheckpointError> {
    let (_, meta) = SafeTensors::read_metadata(bytes)?;
    let info = meta
        .metadata()
        .as_ref()
        .ok_or_else(|| CheckpointError::Format("missing header metadata".into()))?;
    if info.get("format").map(String::as_str) != Some(FORMAT) {
        return Err(CheckpointError::Format("wrong format tag".into()));
    }
    let version = info.get("version").cloned().unwrap_or_default();
    if version != VERSION.to_string() {
        return Err(CheckpointError::Version { found: version });
    }
    let spec: BundleSpec = serde_json::from_str(
        info.get("spec").ok_or_else(|| CheckpointError::Format("missing spec".into()))?,
    )?;
    let layout: NetworkLayout = serde_json::from_str(
        info.get("layout").ok_or_else(|| CheckpointError::Format("missing layout".into()))?,
    )?;
    if layout != spec.layout() {
        return Err(CheckpointError::Wiring(format!(
            "stored layout {layout:?} differs from {:?}",
            spec.layout()
        )));
    }
    spec.validate().map_err(CheckpointError::Wiring)?;
    Ok(spec)
}

pub fn from_bytes(bytes: &[u8], dtype: DType, device: &Device) -> Result<Bundle, CheckpointError> {
    let spec = read_spec(bytes)?;
    let bundle = Bundle::new(spec, 0, dtype, device)?;
    let mut stored: HashMap<String, Tensor> = candle_core::safetensors::load_buffer(bytes, device)?;
    for (name, var) in bundle.gen_params.all().chain(bundle.disc_params.all()) {
        let t = stored.remove(name).ok_or_else(|| CheckpointError::Tensor {
            name: name.clone(),
            problem: "missing".into(),
        })?;
        if t.dims() != var.dims() {
            return Err(CheckpointError::Tensor {
                name: name.clone(),
                problem: format!("shape {:?}, expected {:?}", t.dims(), var.dims()),
            });
        }
        var.set(&t.to_dtype(dtype)?)?;
    }
    if let Some(extra) = stored.keys().next() {
        return Err(CheckpointError::Tensor {
            name: extra.clone(),
            problem: "not part of the bundle".into(),
        });
    }
    Ok(bundle)
}

pub fn load(path: &Path, device: &Device) -> Result<Bundle, CheckpointError> {
    from_bytes(&std::fs::read(path)?, DType::F32, device)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::{Architecture, ModelId};

    fn spec() -> BundleSpec {
        BundleSpec::new(
            ModelId::Sp,
            Architecture {
                base_width: 4,
                depth: 2,
                max_width: 8,
                dropout_p: 0.5,
                disc_base_width: 4,
                disc_n_down: 1,
            },
            8,
        )
    }

    #[test]
    fn round_trip_preserves_every_tensor() {
        let b = Bundle::new(spec(), 9, DType::F32, &Device::Cpu).unwrap();
        let bytes = to_bytes(&b).unwrap();
        let back = from_bytes(&bytes, DType::F32, &Device::Cpu).unwrap();
        assert_eq!(back.spec, b.spec);
        assert_eq!(back.gen_params.hash().unwrap(), b.gen_params.hash().unwrap());
        assert_eq!(back.disc_params.hash().unwrap(), b.disc_params.hash().unwrap());
        assert_eq!(back.gen_params.buffer_hash().unwrap(), b.gen_params.buffer_hash().unwrap());
    }

    #[test]
    fn mismatched_wiring_is_refused() {
        let b = Bundle::new(spec(), 9, DType::F32, &Device::Cpu).unwrap();
        let bytes = to_bytes(&b).unwrap();
        // Same byte length, so header offsets stay valid.
        let needle = b"\\\"in_channels\\\":6";
        let pos = bytes.windows(needle.len()).position(|w| w == needle).unwrap();
        let mut raw = bytes.clone();
        raw[pos + needle.len() - 1] = b'7';
        assert!(matches!(
            from_bytes(&raw, DType::F32, &Device::Cpu),
            Err(CheckpointError::Wiring(_))
        ));
        assert!(matches!(
            from_bytes(b"garbage", DType::F32, &Device::Cpu),
            Err(CheckpointError::Safetensors(_))
        ));
    }
}
