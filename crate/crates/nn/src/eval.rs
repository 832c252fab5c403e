//! Held-out evaluation and the progressive protocol grids.

use std::time::Instant;

use candle_core::DType;
use shad3s_core::dataset::{progressive_grid, DataPoint, DatasetError, GridCell, Protocol};
use shad3s_core::metrics::{inception_score_with, psnr, ssim, Classifier, MetricsError, MetricsReport, Plane, SsimParams};
use shad3s_core::raster::GrayImage;
use shad3s_core::tam::TamFamily;
use thiserror::Error;

use crate::bundle::{stream, Bundle};
use crate::data::{to_images, Batch, Sample};
use crate::layers::Pass;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("nothing to evaluate")]
    Empty,
    #[error(transparent)]
    Candle(#[from] candle_core::Error),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Eval-mode sketch predictions for `samples`, with the mean wall time per image in ms.
pub fn predict(bundle: &Bundle, samples: &[Sample], batch_size: usize) -> Result<(Vec<GrayImage>, f64), EvalError> {
    let dtype = bundle.gen_params.vars.values().next().map(|v| v.dtype()).unwrap_or(DType::F32);
    let mut rng = stream(0, 0);
    let mut out = Vec::with_capacity(samples.len());
    let start = Instant::now();
    for chunk in samples.chunks(batch_size.max(1)) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let batch = Batch::new(&refs, dtype, &candle_core::Device::Cpu)?;
        out.extend(to_images(&bundle.complete(&batch.inputs, Pass::EVAL, &mut rng)?)?);
    }
    let ms = start.elapsed().as_secs_f64() * 1000.0 / samples.len().max(1) as f64;
    Ok((out, ms))
}

/// PSNR over the pooled squared error of all images, mean per-image SSIM,
/// and, with a classifier, the inception score of the predictions.
pub fn score(predictions: &[GrayImage], targets: &[GrayImage], classifier: Option<&dyn Classifier>) -> Result<MetricsReport, EvalError> {
    if predictions.is_empty() || predictions.len() != targets.len() {
        return Err(EvalError::Empty);
    }
    let (mut pool_p, mut pool_t) = (Vec::new(), Vec::new());
    let mut ssim_sum = 0.0;
    for (p, t) in predictions.iter().zip(targets) {
        let (pb, tb) = (p.to_u8(), t.to_u8());
        ssim_sum += ssim(&Plane::new(p.width, p.height, &pb), &Plane::new(t.width, t.height, &tb), &SsimParams::default())?;
        pool_p.extend(pb);
        pool_t.extend(tb);
    }
    let n = pool_p.len();
    let db = psnr(&Plane::new(n, 1, &pool_p), &Plane::new(n, 1, &pool_t), 255.0)?;
    let is = match classifier {
        Some(c) => Some(inception_score_with(predictions, c, 10)?),
        None => None,
    };
    Ok(MetricsReport {
        psnr: db.is_finite().then_some(db),
        ssim: ssim_sum / predictions.len() as f64,
        inception_score: is.map(|s| s.0),
        inception_score_std: is.map(|s| s.1),
        inference_time_ms: 0.0,
        n_samples: predictions.len(),
    })
}

pub fn evaluate(bundle: &Bundle, samples: &[Sample], classifier: Option<&dyn Classifier>) -> Result<MetricsReport, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::Empty);
    }
    let (pred, ms) = predict(bundle, samples, 4)?;
    let targets: Vec<GrayImage> = samples.iter().map(Sample::sketch_image).collect();
    let mut report = score(&pred, &targets, classifier)?;
    report.inference_time_ms = ms;
    Ok(report)
}

/// Rendered protocol grid, its predictions and per-cell L1 (row-major).
pub struct ProgressiveResult {
    pub cells: Vec<GridCell>,
    pub predictions: Vec<GrayImage>,
    pub l1: Vec<f64>,
    /// Each cell as prediction beside ground truth, tiled `rows x cols`.
    pub figure: GrayImage,
}

pub fn progressive_eval(
    bundle: &Bundle,
    protocol: Protocol,
    rows: usize,
    cols: usize,
    seed: u64,
    catalog: &[TamFamily],
) -> Result<ProgressiveResult, EvalError> {
    let side = bundle.spec.resolution;
    let cells = progressive_grid(protocol, rows, cols, seed, catalog, side)?;
    let samples: Vec<Sample> = cells
        .iter()
        .map(|c| {
            let point = DataPoint {
                planes: c.planes.clone(),
                crops: c.crops.clone(),
                meta: grid_meta(side),
            };
            Sample::from_point(&point, side)
        })
        .collect();
    let (predictions, _) = predict(bundle, &samples, 4)?;
    let l1 = predictions
        .iter()
        .zip(&samples)
        .map(|(p, s)| p.data.iter().zip(&s.sketch).map(|(a, b)| (a - b).abs() as f64).sum::<f64>() / p.data.len() as f64)
        .collect();
    let mut figure = GrayImage::filled(cols * 2 * side, rows * side, 1.0);
    for (i, (p, s)) in predictions.iter().zip(&samples).enumerate() {
        let (ox, oy) = ((i % cols) * 2 * side, (i / cols) * side);
        for y in 0..side {
            for x in 0..side {
                figure.set(ox + x, oy + y, p.get(x, y));
                figure.set(ox + side + x, oy + y, s.sketch[y * side + x]);
            }
        }
    }
    Ok(ProgressiveResult {
        cells,
        predictions,
        l1,
        figure,
    })
}

fn grid_meta(side: usize) -> shad3s_core::dataset::ManifestRow {
    use shad3s_core::dataset::{LightRecord, ManifestRow, PointSeeds, Split};
    use shad3s_core::render::{CameraPose, LightSpec};
    ManifestRow {
        path: String::new(),
        k: 1,
        scene_id: 0,
        pose: 0,
        split: Split::Test,
        light: LightRecord::from_spec(&LightSpec::from_angles(0.0, 45.0).expect("valid light")),
        tam_family_id: String::new(),
        seeds: PointSeeds {
            master: 0,
            scene: 0,
            pose: 0,
            crop: 0,
        },
        camera: CameraPose::framing(0.0, 30.0, 1.0),
        n_solids: 1,
        resolution: side,
        background_hatch: false,
        no_shadows: false,
    }
}
