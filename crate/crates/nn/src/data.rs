//! Training samples in network layout and their batching.

use std::path::Path;

use candle_core::{DType, Device, Result, Tensor};
use shad3s_core::dataset::{load_manifest, load_point, DataPoint, DatasetError, Split};
use shad3s_core::raster::GrayImage;

use crate::bundle::Inputs;

/// One data point as float planes, all `side x side`, values in `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub side: usize,
    /// Contour: black strokes (0) on white (1).
    pub contour: Vec<f32>,
    pub hint: Vec<f32>,
    /// Four texture tones, darkest first.
    pub textures: Vec<f32>,
    /// hi, mid, sha, shw.
    pub masks: Vec<f32>,
    pub sketch: Vec<f32>,
    pub n_solids: usize,
    pub k: usize,
}

fn plane(img: &GrayImage, side: usize, smooth: bool) -> Vec<f32> {
    if img.width == side && img.height == side {
        img.data.clone()
    } else {
        img.resize(side, side, smooth).data
    }
}

impl Sample {
    /// Converts a data point, resampling to `side` when it differs.
    pub fn from_point(p: &DataPoint, side: usize) -> Self {
        let pl = &p.planes;
        let mut textures = Vec::with_capacity(4 * side * side);
        for t in &p.crops {
            textures.extend(plane(t, side, false));
        }
        let mut masks = Vec::with_capacity(4 * side * side);
        for m in [&pl.hi, &pl.mid, &pl.sha, &pl.shw] {
            masks.extend(plane(&m.to_image(), side, false));
        }
        Self {
            side,
            contour: plane(&pl.contour_image(), side, false),
            hint: plane(&pl.ill, side, true),
            textures,
            masks,
            sketch: plane(&pl.sk, side, false),
            n_solids: p.meta.n_solids,
            k: p.meta.k,
        }
    }

    pub fn sketch_image(&self) -> GrayImage {
        GrayImage {
            width: self.side,
            height: self.side,
            data: self.sketch.clone(),
        }
    }
}

/// Loads every manifest row of `root` whose split is in `splits`, in
/// manifest order.
pub fn load_samples(root: &Path, splits: &[Split], side: usize) -> std::result::Result<Vec<Sample>, DatasetError> {
    let rows = load_manifest(&root.join("manifest.jsonl"))?;
    rows.iter()
        .filter(|r| splits.contains(&r.split))
        .map(|r| Ok(Sample::from_point(&load_point(root, r)?, side)))
        .collect()
}

/// A stacked mini-batch.
#[derive(Debug, Clone)]
pub struct Batch {
    pub inputs: Inputs,
    pub masks: Tensor,
    pub sketch: Tensor,
}

fn stack(samples: &[&Sample], channels: usize, get: impl Fn(&Sample) -> &[f32], dtype: DType, device: &Device) -> Result<Tensor> {
    let side = samples[0].side;
    let mut data = Vec::with_capacity(samples.len() * channels * side * side);
    for s in samples {
        data.extend_from_slice(get(s));
    }
    Tensor::from_vec(data, (samples.len(), channels, side, side), device)?.to_dtype(dtype)
}

impl Batch {
    pub fn new(samples: &[&Sample], dtype: DType, device: &Device) -> Result<Self> {
        if samples.is_empty() || samples.iter().any(|s| s.side != samples[0].side) {
            return Err(candle_core::Error::Msg("batch needs samples of one size".into()));
        }
        Ok(Self {
            inputs: Inputs {
                contour: stack(samples, 1, |s| &s.contour, dtype, device)?,
                hint: stack(samples, 1, |s| &s.hint, dtype, device)?,
                textures: stack(samples, 4, |s| &s.textures, dtype, device)?,
            },
            masks: stack(samples, 4, |s| &s.masks, dtype, device)?,
            sketch: stack(samples, 1, |s| &s.sketch, dtype, device)?,
        })
    }

    pub fn len(&self) -> usize {
        self.sketch.dims()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Splits a `(n, 1, h, w)` tensor into images.
pub fn to_images(t: &Tensor) -> Result<Vec<GrayImage>> {
    let (n, c, h, w) = t.dims4()?;
    if c != 1 {
        return Err(candle_core::Error::Msg(format!("expected one channel, got {c}")));
    }
    let v = t.to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?;
    Ok((0..n)
        .map(|i| GrayImage {
            width: w,
            height: h,
            data: v[i * h * w..(i + 1) * h * w].to_vec(),
        })
        .collect())
}
