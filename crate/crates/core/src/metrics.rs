//! Image-quality and sample-quality metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("shape mismatch: {0} vs {1} pixels")]
    ShapeMismatch(String, String),
    #[error("image {width}x{height} is smaller than the {window}x{window} window")]
    TooSmall { width: usize, height: usize, window: usize },
    #[error("no samples")]
    Empty,
    #[error("probability rows must be non-empty and equally long")]
    RaggedProbabilities,
}

/// An 8-bit grayscale image view for metric computation.
#[derive(Debug, Clone, Copy)]
pub struct Plane<'a> {
    pub width: usize,
    pub height: usize,
    pub pixels: &'a [u8],
}

impl<'a> Plane<'a> {
    pub fn new(width: usize, height: usize, pixels: &'a [u8]) -> Self {
        assert_eq!(pixels.len(), width * height, "pixel buffer does not match dims");
        Self { width, height, pixels }
    }

    fn shape(&self) -> String {
        format!("{}x{}", self.width, self.height)
    }
}

fn check_same(x: &Plane, y: &Plane) -> Result<(), MetricsError> {
    if (x.width, x.height) != (y.width, y.height) {
        return Err(MetricsError::ShapeMismatch(x.shape(), y.shape()));
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB; identical images give `f64::INFINITY`.
pub fn psnr(x: &Plane, y: &Plane, peak: f64) -> Result<f64, MetricsError> {
    check_same(x, y)?;
    let n = x.pixels.len().max(1) as f64;
    let mse = x
        .pixels
        .iter()
        .zip(y.pixels)
        .map(|(a, b)| {
            let d = *a as f64 - *b as f64;
            d * d
        })
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub c1: f64,
    pub c2: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 8,
            c1: (0.01f64 * 255.0).powi(2),
            c2: (0.03f64 * 255.0).powi(2),
        }
    }
}

/// Mean SSIM over all `window x window` positions (stride 1, uniform
/// weights, population statistics).
pub fn ssim(x: &Plane, y: &Plane, params: &SsimParams) -> Result<f64, MetricsError> {
    check_same(x, y)?;
    let (w, h, win) = (x.width, x.height, params.window);
    if w < win || h < win || win == 0 {
        return Err(MetricsError::TooSmall { width: w, height: h, window: win });
    }
    // Summed-area tables make each window O(1).
    let table = |f: &dyn Fn(usize) -> f64| {
        let mut t = vec![0.0f64; (w + 1) * (h + 1)];
        for yy in 0..h {
            let mut row = 0.0;
            for xx in 0..w {
                row += f(yy * w + xx);
                t[(yy + 1) * (w + 1) + xx + 1] = t[yy * (w + 1) + xx + 1] + row;
            }
        }
        t
    };
    let px = |i: usize| x.pixels[i] as f64;
    let py = |i: usize| y.pixels[i] as f64;
    let sx = table(&px);
    let sy = table(&py);
    let sxx = table(&|i| px(i) * px(i));
    let syy = table(&|i| py(i) * py(i));
    let sxy = table(&|i| px(i) * py(i));
    let rect = |t: &[f64], x0: usize, y0: usize| {
        let (x1, y1) = (x0 + win, y0 + win);
        t[y1 * (w + 1) + x1] - t[y0 * (w + 1) + x1] - t[y1 * (w + 1) + x0] + t[y0 * (w + 1) + x0]
    };
    let n = (win * win) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for y0 in 0..=(h - win) {
        for x0 in 0..=(w - win) {
            let mx = rect(&sx, x0, y0) / n;
            let my = rect(&sy, x0, y0) / n;
            let vx = (rect(&sxx, x0, y0) / n - mx * mx).max(0.0);
            let vy = (rect(&syy, x0, y0) / n - my * my).max(0.0);
            let cxy = rect(&sxy, x0, y0) / n - mx * my;
            let num = (2.0 * mx * my + params.c1) * (2.0 * cxy + params.c2);
            let den = (mx * mx + my * my + params.c1) * (vx + vy + params.c2);
            total += num / den;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Maps images to class-probability vectors.
pub trait Classifier {
    fn num_classes(&self) -> usize;
    /// One probability row per input image (each row sums to 1).
    fn predict_proba(&self, images: &[crate::raster::GrayImage]) -> Vec<Vec<f64>>;
}

/// Inception score from per-sample class posteriors: the exponential of the
/// mean KL divergence from the split's marginal, averaged over `splits`
/// contiguous splits. Returns `(mean, std)`.
pub fn inception_score(probs: &[Vec<f64>], splits: usize) -> Result<(f64, f64), MetricsError> {
    if probs.is_empty() {
        return Err(MetricsError::Empty);
    }
    let k = probs[0].len();
    if k == 0 || probs.iter().any(|p| p.len() != k) {
        return Err(MetricsError::RaggedProbabilities);
    }
    let splits = splits.clamp(1, probs.len());
    let n = probs.len();
    let mut scores = Vec::with_capacity(splits);
    for s in 0..splits {
        let part = &probs[s * n / splits..(s + 1) * n / splits];
        let mut marginal = vec![0.0; k];
        for p in part {
            for (m, v) in marginal.iter_mut().zip(p) {
                *m += v;
            }
        }
        for m in &mut marginal {
            *m /= part.len() as f64;
        }
        let mean_kl = part
            .iter()
            .map(|p| {
                p.iter()
                    .zip(&marginal)
                    .filter(|(pi, _)| **pi > 0.0)
                    .map(|(pi, mi)| pi * (pi / mi).ln())
                    .sum::<f64>()
            })
            .sum::<f64>()
            / part.len() as f64;
        scores.push(mean_kl.exp());
    }
    let mean = scores.iter().sum::<f64>() / splits as f64;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / splits as f64;
    Ok((mean, var.sqrt()))
}

/// Runs a classifier over samples and scores them.
pub fn inception_score_with(
    samples: &[crate::raster::GrayImage],
    classifier: &dyn Classifier,
    splits: usize,
) -> Result<(f64, f64), MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::Empty);
    }
    inception_score(&classifier.predict_proba(samples), splits)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// `None` when every prediction matched its target exactly.
    pub psnr: Option<f64>,
    pub ssim: f64,
    pub inception_score: Option<f64>,
    pub inception_score_std: Option<f64>,
    pub inference_time_ms: f64,
    pub n_samples: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_identity_and_unit_offset() {
        let a = vec![10u8; 64];
        let b = vec![11u8; 64];
        let (pa, pb) = (Plane::new(8, 8, &a), Plane::new(8, 8, &b));
        assert_eq!(psnr(&pa, &pa, 255.0).unwrap(), f64::INFINITY);
        assert!((psnr(&pa, &pb, 255.0).unwrap() - 48.1308).abs() < 1e-3);
        let c = vec![0u8; 16];
        assert!(psnr(&pa, &Plane::new(4, 4, &c), 255.0).is_err());
    }

    #[test]
    fn ssim_constant_images() {
        let a = vec![0u8; 256];
        let b = vec![255u8; 256];
        let p = SsimParams::default();
        let v = ssim(&Plane::new(16, 16, &a), &Plane::new(16, 16, &b), &p).unwrap();
        let want = p.c1 / (255.0f64 * 255.0 + p.c1);
        assert!((v - want).abs() < 1e-12);
        assert!((v - 1.0e-4).abs() < 1e-5);
        assert!(matches!(
            ssim(&Plane::new(4, 4, &a[..16]), &Plane::new(4, 4, &b[..16]), &p),
            Err(MetricsError::TooSmall { .. })
        ));
    }

    #[test]
    fn inception_score_edge_cases() {
        let uniform = vec![vec![0.25; 4]; 40];
        let (m, _) = inception_score(&uniform, 10).unwrap();
        assert!((m - 1.0).abs() < 1e-12);
        let onehot: Vec<Vec<f64>> = (0..40)
            .map(|i| (0..4).map(|c| if c == i % 4 { 1.0 } else { 0.0 }).collect())
            .collect();
        let (m, s) = inception_score(&onehot, 10).unwrap();
        assert!((m - 4.0).abs() < 1e-9 && s < 1e-9);
        assert_eq!(inception_score(&[], 10), Err(MetricsError::Empty));
    }
}
