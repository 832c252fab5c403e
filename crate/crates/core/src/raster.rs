//! Grayscale images and binary masks, plus 8-bit PNG I/O.

use std::io::Cursor;

use image::{ImageFormat, Luma};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("image codec error: {0}")]
    Codec(#[from] image::ImageError),
    #[error("size mismatch: {0}x{1} vs {2}x{3}")]
    SizeMismatch(usize, usize, usize, usize),
}

/// Row-major grayscale image with values in `[0, 1]`; 0 is black ink.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    pub fn same_size<T: Dims>(&self, other: &T) -> bool {
        (self.width, self.height) == other.dims()
    }

    /// 8-bit quantisation, rounding to nearest.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|v| quantize(*v)).collect()
    }

    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Self {
        Self {
            width,
            height,
            data: bytes.iter().map(|b| *b as f32 / 255.0).collect(),
        }
    }

    pub fn flip_horizontal(&self) -> Self {
        Self::from_fn(self.width, self.height, |x, y| self.get(self.width - 1 - x, y))
    }

    pub fn binarize(&self, threshold: f32) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| *v >= threshold).collect(),
        }
    }

    pub fn encode_png(&self) -> Vec<u8> {
        encode_png_u8(self.width, self.height, self.to_u8())
    }

    /// Decodes any supported image to gray; transparent pixels become white.
    pub fn decode_png(bytes: &[u8]) -> Result<Self, RasterError> {
        let img = image::load_from_memory(bytes)?.into_luma_alpha8();
        let (w, h) = img.dimensions();
        let data = img
            .pixels()
            .map(|p| {
                let (l, a) = (p.0[0] as f32 / 255.0, p.0[1] as f32 / 255.0);
                l * a + (1.0 - a)
            })
            .collect();
        Ok(Self {
            width: w as usize,
            height: h as usize,
            data,
        })
    }

    /// Resampled copy; `smooth` selects a triangle filter, otherwise nearest.
    pub fn resize(&self, width: usize, height: usize, smooth: bool) -> Self {
        if (width, height) == (self.width, self.height) {
            return self.clone();
        }
        let src: image::ImageBuffer<Luma<f32>, Vec<f32>> =
            image::ImageBuffer::from_raw(self.width as u32, self.height as u32, self.data.clone())
                .expect("buffer size matches dims");
        let filter = if smooth {
            image::imageops::FilterType::Triangle
        } else {
            image::imageops::FilterType::Nearest
        };
        let out = image::imageops::resize(&src, width as u32, height as u32, filter);
        Self {
            width,
            height,
            data: out.into_raw(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|v| *v as f64).sum::<f64>() / self.data.len().max(1) as f64
    }
}

pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub(crate) fn encode_png_u8(width: usize, height: usize, pixels: Vec<u8>) -> Vec<u8> {
    let img: image::ImageBuffer<Luma<u8>, Vec<u8>> =
        image::ImageBuffer::from_raw(width as u32, height as u32, pixels).expect("buffer size matches dims");
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .expect("PNG encoding into memory cannot fail");
    out.into_inner()
}

/// Row-major binary mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|b| *b)
    }

    pub fn and(&self, o: &Mask) -> Mask {
        self.zip(o, |a, b| a && b)
    }

    pub fn or(&self, o: &Mask) -> Mask {
        self.zip(o, |a, b| a || b)
    }

    fn zip(&self, o: &Mask, f: impl Fn(bool, bool) -> bool) -> Mask {
        assert_eq!(self.dims(), o.dims());
        Mask {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&o.data).map(|(a, b)| f(*a, *b)).collect(),
        }
    }

    /// White (1.0) where set.
    pub fn to_image(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|b| if *b { 1.0 } else { 0.0 }).collect(),
        }
    }

    /// Majority vote over `factor x factor` blocks; ties count as set.
    pub fn downsample_majority(&self, factor: usize) -> Mask {
        let (w, h) = (self.width / factor, self.height / factor);
        let mut out = Mask::new(w, h);
        let half = factor * factor;
        for y in 0..h {
            for x in 0..w {
                let mut n = 0;
                for dy in 0..factor {
                    for dx in 0..factor {
                        n += self.get(x * factor + dx, y * factor + dy) as usize;
                    }
                }
                out.set(x, y, 2 * n >= half);
            }
        }
        out
    }
}

pub trait Dims {
    fn dims(&self) -> (usize, usize);
}

impl Dims for GrayImage {
    fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

impl Dims for Mask {
    fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}
