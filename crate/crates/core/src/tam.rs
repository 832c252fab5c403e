//! Tonal art maps: procedural synthesis, validation, cropping, and the
//! on-disk catalog.

use std::fs;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{GrayImage, RasterError};

/// Gray level below which a texel counts as ink.
pub const INK_THRESHOLD: f32 = 0.5;
/// Largest tolerated fraction of texels breaking the nesting property.
pub const MAX_NESTING_VIOLATION: f64 = 0.005;
pub const DEFAULT_TAM_SIZE: usize = 1024;

#[derive(Debug, Error)]
pub enum TamError {
    #[error("crop size {size} exceeds texture size {width}x{height}")]
    CropTooLarge { size: usize, width: usize, height: usize },
    #[error("expected 4 tone images, got {0}")]
    ToneCount(usize),
    #[error("tone images differ in size: {0}")]
    SizeMismatch(String),
    #[error("family `{id}` failed validation: {reason}")]
    Invalid { id: String, reason: String },
    #[error("unknown texture family `{0}`")]
    UnknownFamily(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad meta.json: {0}")]
    Meta(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TamStyle {
    Parallel,
    Cross,
    Stipple,
}

impl std::str::FromStr for TamStyle {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "parallel" => Ok(TamStyle::Parallel),
            "cross" => Ok(TamStyle::Cross),
            "stipple" => Ok(TamStyle::Stipple),
            _ => Err(format!("unknown TAM style `{s}` (parallel, cross, stipple)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TamParams {
    pub size: usize,
    /// Primary stroke orientation in degrees, counter-clockwise from +x.
    pub angle_deg: f64,
    /// Ink coverage targets for tones 1 (darkest) .. 4 (lightest).
    pub coverage: [f64; 4],
}

impl Default for TamParams {
    fn default() -> Self {
        Self {
            size: DEFAULT_TAM_SIZE,
            angle_deg: 45.0,
            coverage: [0.60, 0.42, 0.26, 0.12],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TamMeta {
    pub style: TamStyle,
    pub seed: u64,
    pub angle_deg: f64,
    pub license: String,
}

/// Four nested tone textures, `tones[0]` darkest.
#[derive(Debug, Clone, PartialEq)]
pub struct TamFamily {
    pub id: String,
    pub meta: TamMeta,
    pub tones: [GrayImage; 4],
}

struct InkCanvas {
    size: usize,
    ink: Vec<bool>,
    inked: usize,
}

impl InkCanvas {
    fn coverage(&self) -> f64 {
        self.inked as f64 / self.ink.len() as f64
    }

    /// Wrapped so the texture tiles seamlessly.
    fn dab(&mut self, cx: f64, cy: f64, radius: f64) {
        let n = self.size as i64;
        let r = radius.ceil() as i64;
        let (ix, iy) = (cx.floor() as i64, cy.floor() as i64);
        for dy in -r..=r {
            for dx in -r..=r {
                let (px, py) = (ix + dx, iy + dy);
                let (fx, fy) = (px as f64 + 0.5 - cx, py as f64 + 0.5 - cy);
                if fx * fx + fy * fy > radius * radius {
                    continue;
                }
                let i = (py.rem_euclid(n) * n + px.rem_euclid(n)) as usize;
                if !self.ink[i] {
                    self.ink[i] = true;
                    self.inked += 1;
                }
            }
        }
    }

    fn stroke(&mut self, cx: f64, cy: f64, angle: f64, length: f64, radius: f64) {
        let (dx, dy) = (angle.cos(), -angle.sin());
        let steps = (length * 2.0).ceil() as usize;
        for s in 0..=steps {
            let t = s as f64 / steps as f64 - 0.5;
            self.dab(cx + dx * length * t, cy + dy * length * t, radius);
        }
    }

    fn to_image(&self) -> GrayImage {
        GrayImage {
            width: self.size,
            height: self.size,
            data: self.ink.iter().map(|i| if *i { 0.0 } else { 1.0 }).collect(),
        }
    }
}

fn add_strokes(canvas: &mut InkCanvas, rng: &mut ChaCha8Rng, style: TamStyle, angle: f64, target: f64, cross: bool) {
    let size = canvas.size as f64;
    let jitter = 2f64.to_radians();
    let mut budget = 2_000_000usize;
    while canvas.coverage() < target && budget > 0 {
        budget -= 1;
        let (cx, cy) = (rng.random_range(0.0..size), rng.random_range(0.0..size));
        match style {
            TamStyle::Stipple => {
                let r = rng.random_range(0.8..1.8);
                canvas.dab(cx, cy, r);
            }
            TamStyle::Parallel | TamStyle::Cross => {
                let a = if cross && rng.random_bool(0.5) {
                    angle + std::f64::consts::FRAC_PI_2
                } else {
                    angle
                };
                let a = a + rng.random_range(-jitter..jitter);
                let len = rng.random_range(size / 10.0..size / 4.0);
                let r = rng.random_range(0.7..1.3);
                canvas.stroke(cx, cy, a, len, r);
            }
        }
    }
}

/// Procedural TAM with default parameters and a seed-dependent angle.
pub fn synthesize_tam(seed: u64, style: TamStyle) -> TamFamily {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7a3d_11c5);
    let params = TamParams {
        angle_deg: rng.random_range(0.0..180.0f64).round(),
        ..TamParams::default()
    };
    synthesize_tam_with(seed, style, &params)
}

/// Builds the lightest tone first; each darker tone adds strokes to the
/// previous one, so nesting holds exactly.
pub fn synthesize_tam_with(seed: u64, style: TamStyle, params: &TamParams) -> TamFamily {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut canvas = InkCanvas {
        size: params.size,
        ink: vec![false; params.size * params.size],
        inked: 0,
    };
    let angle = params.angle_deg.to_radians();
    let mut tones: [Option<GrayImage>; 4] = Default::default();
    for k in (0..4).rev() {
        // Cross-hatching appears in the two darkest tones.
        let cross = style == TamStyle::Cross && k < 2;
        add_strokes(&mut canvas, &mut rng, style, angle, params.coverage[k], cross);
        tones[k] = Some(canvas.to_image());
    }
    let name = match style {
        TamStyle::Parallel => "parallel",
        TamStyle::Cross => "cross",
        TamStyle::Stipple => "stipple",
    };
    TamFamily {
        id: format!("{name}-{seed}"),
        meta: TamMeta {
            style,
            seed,
            angle_deg: params.angle_deg,
            license: "CC0-1.0 (procedurally generated)".into(),
        },
        tones: tones.map(|t| t.expect("all tones built")),
    }
}

pub fn ink_coverage(img: &GrayImage) -> f64 {
    img.data.iter().filter(|v| **v < INK_THRESHOLD).count() as f64 / img.data.len().max(1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TamReport {
    /// Fraction of texels inked in tone k+1 but not in tone k, per pair.
    pub nesting_violation: [f64; 3],
    pub max_violation: f64,
    pub coverage: [f64; 4],
    pub coverage_monotone: bool,
    pub accepted: bool,
}

/// Checks nesting and coverage monotonicity of four tones, darkest first.
pub fn validate_tam(images: &[GrayImage]) -> Result<TamReport, TamError> {
    if images.len() != 4 {
        return Err(TamError::ToneCount(images.len()));
    }
    let (w, h) = (images[0].width, images[0].height);
    if let Some(bad) = images.iter().find(|i| (i.width, i.height) != (w, h)) {
        return Err(TamError::SizeMismatch(format!(
            "{}x{} vs {}x{}",
            w, h, bad.width, bad.height
        )));
    }
    let n = (w * h).max(1) as f64;
    let mut nesting_violation = [0.0; 3];
    for k in 0..3 {
        let (dark, light) = (&images[k], &images[k + 1]);
        let bad = light
            .data
            .iter()
            .zip(&dark.data)
            .filter(|(l, d)| **l < INK_THRESHOLD && **d >= INK_THRESHOLD)
            .count();
        nesting_violation[k] = bad as f64 / n;
    }
    let coverage: [f64; 4] = std::array::from_fn(|k| ink_coverage(&images[k]));
    let coverage_monotone = coverage.windows(2).all(|c| c[0] > c[1]);
    let max_violation = nesting_violation.iter().cloned().fold(0.0, f64::max);
    Ok(TamReport {
        nesting_violation,
        max_violation,
        coverage,
        coverage_monotone,
        accepted: coverage_monotone && max_violation <= MAX_NESTING_VIOLATION,
    })
}

/// Same window cut from all four tones; the window origin is uniform over
/// every valid position.
pub fn crop(tam: &TamFamily, seed: u64, size: usize) -> Result<[GrayImage; 4], TamError> {
    let (w, h) = (tam.tones[0].width, tam.tones[0].height);
    if size == 0 || size > w || size > h {
        return Err(TamError::CropTooLarge { size, width: w, height: h });
    }
    let (x0, y0) = crop_origin(w, h, seed, size);
    Ok(std::array::from_fn(|k| {
        let t = &tam.tones[k];
        GrayImage::from_fn(size, size, |x, y| t.get(x0 + x, y0 + y))
    }))
}

pub fn crop_origin(width: usize, height: usize, seed: u64, size: usize) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (rng.random_range(0..=width - size), rng.random_range(0..=height - size))
}

const CATALOG: [(&str, TamStyle, u64, f64); 6] = [
    ("parallel-diagonal", TamStyle::Parallel, 101, 45.0),
    ("parallel-steep", TamStyle::Parallel, 102, 110.0),
    ("cross-diagonal", TamStyle::Cross, 201, 30.0),
    ("cross-level", TamStyle::Cross, 202, 0.0),
    ("stipple-fine", TamStyle::Stipple, 301, 0.0),
    ("stipple-dense", TamStyle::Stipple, 302, 0.0),
];

/// Ids of the shipped families, in catalog order (sorted).
pub fn catalog_ids() -> Vec<&'static str> {
    let mut ids: Vec<_> = CATALOG.iter().map(|c| c.0).collect();
    ids.sort_unstable();
    ids
}

/// Builds the six shipped families at the given texture size, sorted by id.
pub fn build_catalog(size: usize) -> Vec<TamFamily> {
    let mut fams: Vec<TamFamily> = CATALOG
        .iter()
        .map(|(id, style, seed, angle)| {
            let mut params = TamParams {
                size,
                angle_deg: *angle,
                ..TamParams::default()
            };
            if *id == "stipple-dense" {
                params.coverage = [0.70, 0.50, 0.32, 0.16];
            }
            let mut fam = synthesize_tam_with(*seed, *style, &params);
            fam.id = (*id).to_string();
            fam
        })
        .collect();
    fams.sort_by(|a, b| a.id.cmp(&b.id));
    fams
}

/// Process-wide default catalog at full resolution.
pub fn default_catalog() -> Arc<Vec<TamFamily>> {
    static CATALOG_CELL: OnceLock<Arc<Vec<TamFamily>>> = OnceLock::new();
    CATALOG_CELL
        .get_or_init(|| Arc::new(build_catalog(DEFAULT_TAM_SIZE)))
        .clone()
}

pub fn find_family<'a>(catalog: &'a [TamFamily], id: &str) -> Result<&'a TamFamily, TamError> {
    catalog
        .iter()
        .find(|f| f.id == id)
        .ok_or_else(|| TamError::UnknownFamily(id.to_string()))
}

/// Writes `<dir>/<id>/tone{1..4}.png` and `meta.json`.
pub fn save_family(dir: &Path, fam: &TamFamily) -> Result<(), TamError> {
    let fdir = dir.join(&fam.id);
    fs::create_dir_all(&fdir)?;
    for (k, t) in fam.tones.iter().enumerate() {
        fs::write(fdir.join(format!("tone{}.png", k + 1)), t.encode_png())?;
    }
    fs::write(fdir.join("meta.json"), serde_json::to_vec_pretty(&fam.meta)?)?;
    Ok(())
}

/// Loads one family directory and rejects it unless it validates.
pub fn load_family(fdir: &Path) -> Result<TamFamily, TamError> {
    let id = fdir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let meta: TamMeta = serde_json::from_slice(&fs::read(fdir.join("meta.json"))?)?;
    let mut tones = Vec::with_capacity(4);
    for k in 1..=4 {
        tones.push(GrayImage::decode_png(&fs::read(fdir.join(format!("tone{k}.png")))?)?);
    }
    let report = validate_tam(&tones)?;
    if !report.accepted {
        return Err(TamError::Invalid {
            id,
            reason: format!(
                "nesting violation {:.4}, coverage {:?}",
                report.max_violation, report.coverage
            ),
        });
    }
    let tones: [GrayImage; 4] = tones.try_into().expect("four tones");
    Ok(TamFamily { id, meta, tones })
}

/// Loads every family under `dir`, sorted by id.
pub fn load_catalog(dir: &Path) -> Result<Vec<TamFamily>, TamError> {
    let mut fams = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if entry.file_type()?.is_dir() {
            fams.push(load_family(&entry.path())?);
        }
    }
    fams.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(fams)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(style: TamStyle) -> TamFamily {
        synthesize_tam_with(
            9,
            style,
            &TamParams {
                size: 128,
                ..TamParams::default()
            },
        )
    }

    #[test]
    fn synthesized_families_nest_exactly() {
        for style in [TamStyle::Parallel, TamStyle::Cross, TamStyle::Stipple] {
            let fam = small(style);
            let r = validate_tam(&fam.tones).unwrap();
            assert!(r.accepted, "{style:?}: {r:?}");
            assert_eq!(r.max_violation, 0.0);
            assert!(r.coverage[0] > r.coverage[3]);
        }
    }

    #[test]
    fn synthesis_is_deterministic() {
        assert_eq!(small(TamStyle::Cross), small(TamStyle::Cross));
    }

    #[test]
    fn reversed_tones_are_rejected() {
        let mut tones = small(TamStyle::Parallel).tones.to_vec();
        tones.reverse();
        let r = validate_tam(&tones).unwrap();
        assert!(!r.coverage_monotone);
        assert!(!r.accepted);
    }

    #[test]
    fn mismatched_sizes_are_format_errors() {
        let mut tones = small(TamStyle::Parallel).tones.to_vec();
        tones[2] = GrayImage::new(10, 10);
        assert!(matches!(validate_tam(&tones), Err(TamError::SizeMismatch(_))));
        assert!(matches!(validate_tam(&tones[..3]), Err(TamError::ToneCount(3))));
    }

    #[test]
    fn crops_are_aligned_and_deterministic() {
        let fam = small(TamStyle::Cross);
        let a = crop(&fam, 5, 32).unwrap();
        let b = crop(&fam, 5, 32).unwrap();
        assert_eq!(a, b);
        assert!(validate_tam(&a).unwrap().max_violation == 0.0);
        let (x0, y0) = crop_origin(128, 128, 5, 32);
        assert_eq!(a[1].get(3, 4), fam.tones[1].get(x0 + 3, y0 + 4));
        assert!(matches!(crop(&fam, 5, 129), Err(TamError::CropTooLarge { .. })));
    }

    #[test]
    fn catalog_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let fams = build_catalog(64);
        assert_eq!(fams.len(), 6);
        for f in &fams {
            save_family(dir.path(), f).unwrap();
        }
        let back = load_catalog(dir.path()).unwrap();
        assert_eq!(back, fams);
    }
}
