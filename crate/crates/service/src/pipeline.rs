//! Request preprocessing, inference and postprocessing, independent of HTTP.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use shad3s_core::raster::GrayImage;
use shad3s_core::render::{render_gnomon_hint, LightSpec, GNOMON_CAMERA_AZIMUTH};
use shad3s_core::tam::{crop, find_family, TamFamily};
use shad3s_nn::bundle::{stream, Bundle, Inputs};
use shad3s_nn::data::to_images;
use shad3s_nn::Pass;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("unknown texture family `{0}`")]
    UnknownFamily(String),
    #[error("malformed contour image: {0}")]
    BadImage(String),
    #[error("invalid request: {0}")]
    BadRequest(String),
    #[error("inference failed: {0}")]
    Inference(String),
}

/// JSON parameters of a completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionParams {
    pub azimuth: f64,
    pub elevation: f64,
    pub tam_family_id: String,
    #[serde(default)]
    pub model_id: Option<String>,
    /// Overrides the texture-crop seed derived from the request.
    #[serde(default)]
    pub seed: Option<u64>,
}

/// Response metadata, sent as a JSON header next to the PNG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionMeta {
    pub model_id: String,
    pub tam_family_id: String,
    pub azimuth: f64,
    pub elevation: f64,
    pub crop_seed: u64,
    pub width: usize,
    pub height: usize,
    /// Reason the output should not be trusted, if any.
    pub low_confidence: Option<String>,
}

pub struct Completion {
    pub image: GrayImage,
    pub meta: CompletionMeta,
}

/// Camera-relative light for a hint request; elevation must be above the horizon.
pub fn hint_light(azimuth: f64, elevation: f64) -> Result<LightSpec, ServiceError> {
    if !azimuth.is_finite() || !(elevation > 0.0 && elevation <= 90.0) {
        return Err(ServiceError::BadRequest(format!(
            "angles ({azimuth}, {elevation}) out of range; elevation must be in (0, 90]"
        )));
    }
    LightSpec::from_angles(GNOMON_CAMERA_AZIMUTH + azimuth, elevation).map_err(|e| ServiceError::BadRequest(e.to_string()))
}

pub fn illumination_hint(azimuth: f64, elevation: f64, size: usize) -> Result<GrayImage, ServiceError> {
    if !(8..=1024).contains(&size) {
        return Err(ServiceError::BadRequest(format!("hint size {size} outside [8, 1024]")));
    }
    Ok(render_gnomon_hint(&hint_light(azimuth, elevation)?, size))
}

/// Placement of the source image inside the square model input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Letterbox {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl Letterbox {
    pub fn fit(src_w: usize, src_h: usize, side: usize) -> Self {
        let scale = side as f64 / src_w.max(src_h) as f64;
        let width = ((src_w as f64 * scale).round() as usize).clamp(1, side);
        let height = ((src_h as f64 * scale).round() as usize).clamp(1, side);
        Self {
            x0: (side - width) / 2,
            y0: (side - height) / 2,
            width,
            height,
        }
    }
}

/// Scales `img` into a white `side x side` square and binarises at 0.5.
pub fn letterbox_contour(img: &GrayImage, side: usize) -> (GrayImage, Letterbox) {
    let lb = Letterbox::fit(img.width, img.height, side);
    let scaled = img.resize(lb.width, lb.height, true);
    let mut out = GrayImage::filled(side, side, 1.0);
    for y in 0..lb.height {
        for x in 0..lb.width {
            out.set(lb.x0 + x, lb.y0 + y, scaled.get(x, y));
        }
    }
    let bin = out.binarize(0.5);
    let img = GrayImage {
        width: side,
        height: side,
        data: bin.data.iter().map(|b| if *b { 1.0 } else { 0.0 }).collect(),
    };
    (img, lb)
}

/// Crop seed from the request content.
pub fn request_seed(contour_png: &[u8], params: &CompletionParams, model_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update((contour_png.len() as u64).to_le_bytes());
    h.update(contour_png);
    h.update(params.azimuth.to_le_bytes());
    h.update(params.elevation.to_le_bytes());
    h.update(params.tam_family_id.as_bytes());
    h.update([0]);
    h.update(model_id.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// Runs one completion in eval mode.
pub fn complete(
    bundle: &Bundle,
    model_id: &str,
    catalog: &[TamFamily],
    contour_png: &[u8],
    params: &CompletionParams,
) -> Result<Completion, ServiceError> {
    let side = bundle.spec.resolution;
    let family =
        find_family(catalog, &params.tam_family_id).map_err(|_| ServiceError::UnknownFamily(params.tam_family_id.clone()))?;
    let light = hint_light(params.azimuth, params.elevation)?;
    let source = GrayImage::decode_png(contour_png).map_err(|e| ServiceError::BadImage(e.to_string()))?;
    if source.width == 0 || source.height == 0 {
        return Err(ServiceError::BadImage("empty image".into()));
    }
    let (contour, lb) = letterbox_contour(&source, side);
    let empty = contour.data.iter().all(|v| *v >= 0.5);
    let hint = render_gnomon_hint(&light, side);
    let crop_seed = params.seed.unwrap_or_else(|| request_seed(contour_png, params, model_id));
    let crops = crop(family, crop_seed, side).map_err(|e| ServiceError::BadRequest(e.to_string()))?;

    let infer = || -> candle_core::Result<GrayImage> {
        let dev = candle_core::Device::Cpu;
        let t = |imgs: &[&GrayImage]| {
            let data: Vec<f32> = imgs.iter().flat_map(|i| i.data.iter().copied()).collect();
            candle_core::Tensor::from_vec(data, (1, imgs.len(), side, side), &dev)
        };
        let inputs = Inputs {
            contour: t(&[&contour])?,
            hint: t(&[&hint])?,
            textures: t(&crops.iter().collect::<Vec<_>>())?,
        };
        let out = bundle.complete(&inputs, Pass::EVAL, &mut stream(0, 0))?;
        Ok(to_images(&out)?.remove(0))
    };
    let square = infer().map_err(|e| ServiceError::Inference(e.to_string()))?;
    let inner = GrayImage::from_fn(lb.width, lb.height, |x, y| square.get(lb.x0 + x, lb.y0 + y));
    let image = inner.resize(source.width, source.height, false);
    Ok(Completion {
        meta: CompletionMeta {
            model_id: model_id.to_string(),
            tam_family_id: family.id.clone(),
            azimuth: params.azimuth,
            elevation: params.elevation,
            crop_seed,
            width: image.width,
            height: image.height,
            low_confidence: empty.then(|| "contour empty".to_string()),
        },
        image,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn letterbox_centres_and_keeps_aspect() {
        assert_eq!(
            Letterbox::fit(200, 100, 64),
            Letterbox {
                x0: 0,
                y0: 16,
                width: 64,
                height: 32
            }
        );
        let img = GrayImage::from_fn(40, 20, |x, _| if x < 20 { 0.0 } else { 0.9 });
        let (sq, lb) = letterbox_contour(&img, 32);
        assert_eq!((lb.width, lb.height, lb.y0), (32, 16, 8));
        assert!(sq.data.iter().all(|v| *v == 0.0 || *v == 1.0));
        assert_eq!(sq.get(3, 12), 0.0);
        assert_eq!(sq.get(28, 12), 1.0);
        assert_eq!(sq.get(3, 2), 1.0);
    }

    #[test]
    fn hint_angles_are_checked() {
        assert!(hint_light(45.0, 0.0).is_err());
        assert!(hint_light(45.0, 91.0).is_err());
        assert!(hint_light(f64::NAN, 30.0).is_err());
        assert!(hint_light(-30.0, 30.0).is_ok());
    }

    #[test]
    fn seed_depends_on_every_field() {
        let p = CompletionParams {
            azimuth: 10.0,
            elevation: 30.0,
            tam_family_id: "a".into(),
            model_id: None,
            seed: None,
        };
        let base = request_seed(b"png", &p, "m");
        assert_eq!(base, request_seed(b"png", &p, "m"));
        assert_ne!(base, request_seed(b"pnG", &p, "m"));
        assert_ne!(base, request_seed(b"png", &CompletionParams { azimuth: 11.0, ..p.clone() }, "m"));
        assert_ne!(base, request_seed(b"png", &p, "n"));
    }
}
