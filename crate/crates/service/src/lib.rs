//! HTTP front end: completion, illumination hints, texture catalog and
//! model listing.

pub mod pipeline;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Multipart, Path as UrlPath, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use shad3s_core::tam::{ink_coverage, TamFamily};
use shad3s_nn::bundle::Bundle;
use shad3s_nn::checkpoint::{self, CheckpointError};

pub use pipeline::{complete, illumination_hint, CompletionMeta, CompletionParams, ServiceError};

pub const META_HEADER: &str = "x-shad3s-meta";
pub const ENV_CKPT_DIR: &str = "SHAD3S_CKPT_DIR";
pub const ENV_PORT: &str = "SHAD3S_PORT";
pub const DEFAULT_PORT: u16 = 8080;

pub struct LoadedModel {
    pub bundle: Mutex<Bundle>,
    pub resolution: usize,
    pub kind: String,
    /// Hash of the checkpoint bytes.
    pub version: String,
}

#[derive(Clone)]
pub struct AppState {
    pub models: Arc<BTreeMap<String, Arc<LoadedModel>>>,
    pub catalog: Arc<Vec<TamFamily>>,
}

fn version_of(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let d = Sha256::digest(bytes);
    d[..8].iter().map(|b| format!("{b:02x}")).collect()
}

impl AppState {
    pub fn new(catalog: Arc<Vec<TamFamily>>) -> Self {
        Self {
            models: Arc::new(BTreeMap::new()),
            catalog,
        }
    }

    /// Adds a model from checkpoint bytes under `id`.
    pub fn with_checkpoint(mut self, id: &str, bytes: &[u8]) -> Result<Self, CheckpointError> {
        let bundle = checkpoint::from_bytes(bytes, candle_core::DType::F32, &candle_core::Device::Cpu)?;
        let model = LoadedModel {
            resolution: bundle.spec.resolution,
            kind: bundle.spec.model.name().to_string(),
            version: version_of(bytes),
            bundle: Mutex::new(bundle),
        };
        let mut models = (*self.models).clone();
        models.insert(id.to_string(), Arc::new(model));
        self.models = Arc::new(models);
        Ok(self)
    }

    pub fn with_bundle(mut self, id: &str, bundle: Bundle) -> Result<Self, CheckpointError> {
        let bytes = checkpoint::to_bytes(&bundle)?;
        let model = LoadedModel {
            resolution: bundle.spec.resolution,
            kind: bundle.spec.model.name().to_string(),
            version: version_of(&bytes),
            bundle: Mutex::new(bundle),
        };
        let mut models = (*self.models).clone();
        models.insert(id.to_string(), Arc::new(model));
        self.models = Arc::new(models);
        Ok(self)
    }

    /// Loads a checkpoint file; the model id is the file stem.
    pub fn load_file(self, path: &Path) -> Result<Self, CheckpointError> {
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| CheckpointError::Format(format!("bad checkpoint path {}", path.display())))?
            .to_string();
        let bytes = std::fs::read(path)?;
        self.with_checkpoint(&id, &bytes)
    }

    /// Loads every `*.bin` checkpoint in `dir`.
    pub fn load_dir(mut self, dir: &Path) -> Result<Self, CheckpointError> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "bin"))
            .collect();
        paths.sort();
        for p in paths {
            self = self.load_file(&p)?;
        }
        Ok(self)
    }
}

struct ApiError(StatusCode, String);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let status = match e {
            ServiceError::UnknownModel(_) | ServiceError::UnknownFamily(_) => StatusCode::NOT_FOUND,
            ServiceError::BadImage(_) | ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::Inference(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/complete", post(complete_handler))
        .route("/v1/illumination", get(illumination_handler))
        .route("/v1/textures", get(textures_handler))
        .route("/v1/textures/{id}/{tone}", get(tone_handler))
        .route("/v1/models", get(models_handler))
        .route("/healthz", get(|| async { "ok" }))
        .with_state(state)
}

async fn complete_handler(State(state): State<AppState>, mut form: Multipart) -> Result<Response, ApiError> {
    let bad = |m: String| ApiError(StatusCode::BAD_REQUEST, m);
    let (mut contour, mut params): (Option<Bytes>, Option<CompletionParams>) = (None, None);
    while let Some(field) = form.next_field().await.map_err(|e| bad(e.to_string()))? {
        match field.name() {
            Some("contour") => contour = Some(field.bytes().await.map_err(|e| bad(e.to_string()))?),
            Some("params") => {
                let raw = field.bytes().await.map_err(|e| bad(e.to_string()))?;
                params = Some(serde_json::from_slice(&raw).map_err(|e| bad(format!("params: {e}")))?);
            }
            _ => {}
        }
    }
    let contour = contour.ok_or_else(|| bad("missing `contour` part".into()))?;
    let params = params.ok_or_else(|| bad("missing `params` part".into()))?;
    let model_id = match &params.model_id {
        Some(id) => id.clone(),
        None => state
            .models
            .keys()
            .next()
            .cloned()
            .ok_or_else(|| ServiceError::UnknownModel("(none loaded)".into()))?,
    };
    let model = state
        .models
        .get(&model_id)
        .cloned()
        .ok_or_else(|| ServiceError::UnknownModel(model_id.clone()))?;
    let catalog = state.catalog.clone();
    let done = tokio::task::spawn_blocking(move || {
        let bundle = model.bundle.lock().unwrap_or_else(|p| p.into_inner());
        complete(&bundle, &model_id, &catalog, &contour, &params)
    })
    .await
    .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    let meta = serde_json::to_string(&done.meta).expect("metadata serialises");
    let mut resp = png(done.image.encode_png());
    resp.headers_mut().insert(
        META_HEADER,
        HeaderValue::from_str(&meta).map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?,
    );
    Ok(resp)
}

#[derive(Debug, Deserialize)]
struct HintQuery {
    azimuth: f64,
    elevation: f64,
    size: Option<usize>,
}

async fn illumination_handler(Query(q): Query<HintQuery>) -> Result<Response, ApiError> {
    let size = q.size.unwrap_or(256);
    let img = tokio::task::spawn_blocking(move || illumination_hint(q.azimuth, q.elevation, size))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(png(img.encode_png()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextureSummary {
    pub id: String,
    pub style: String,
    /// Ink coverage of tones 1..4.
    pub coverage: [f64; 4],
    /// Thumbnail URLs of tones 1..4.
    pub thumbnails: [String; 4],
}

async fn textures_handler(State(state): State<AppState>) -> Json<Vec<TextureSummary>> {
    let mut list: Vec<TextureSummary> = state
        .catalog
        .iter()
        .map(|f| TextureSummary {
            id: f.id.clone(),
            style: serde_json::to_value(f.meta.style)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default(),
            coverage: std::array::from_fn(|k| ink_coverage(&f.tones[k])),
            thumbnails: std::array::from_fn(|k| format!("/v1/textures/{}/{}", f.id, k + 1)),
        })
        .collect();
    list.sort_by(|a, b| a.id.cmp(&b.id));
    Json(list)
}

pub const THUMBNAIL_SIZE: usize = 128;

async fn tone_handler(State(state): State<AppState>, UrlPath((id, tone)): UrlPath<(String, usize)>) -> Result<Response, ApiError> {
    let fam = state
        .catalog
        .iter()
        .find(|f| f.id == id)
        .ok_or_else(|| ServiceError::UnknownFamily(id.clone()))?;
    if !(1..=4).contains(&tone) {
        return Err(ApiError(StatusCode::NOT_FOUND, format!("tone {tone} not in 1..=4")));
    }
    let t = &fam.tones[tone - 1];
    let n = THUMBNAIL_SIZE.min(t.width).min(t.height);
    // A crop keeps stroke width; nested tones stay nested.
    let thumb = shad3s_core::raster::GrayImage::from_fn(n, n, |x, y| t.get(x, y));
    Ok(png(thumb.encode_png()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub id: String,
    pub kind: String,
    pub resolution: usize,
    pub version: String,
}

async fn models_handler(State(state): State<AppState>) -> Json<Vec<ModelSummary>> {
    Json(
        state
            .models
            .iter()
            .map(|(id, m)| ModelSummary {
                id: id.clone(),
                kind: m.kind.clone(),
                resolution: m.resolution,
                version: m.version.clone(),
            })
            .collect(),
    )
}

/// Port from `SHAD3S_PORT`, else the default.
pub fn port_from_env() -> u16 {
    std::env::var(ENV_PORT)
        .ok()
        .and_then(|p| p.parse().ok())
        .unwrap_or(DEFAULT_PORT)
}

pub async fn serve(state: AppState, port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
