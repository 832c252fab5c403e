//! wasm-bindgen bindings for the static demo page in `www/`.
//!
//! Every image comes back as RGBA bytes ready for `ImageData`.

use shad3s_core::dataset::{render_point, SubsetConfig};
use shad3s_core::raster::{GrayImage, Mask};
use shad3s_core::render::{render_gnomon_hint, LightSpec, GNOMON_CAMERA_AZIMUTH};
use shad3s_core::tam::{build_catalog, catalog_ids, TamFamily};
use wasm_bindgen::prelude::*;

/// Texture side used by the demo; the full-size catalog is slow to build in a page.
pub const DEMO_TAM_SIZE: usize = 256;

fn gray_rgba(img: &GrayImage) -> Vec<u8> {
    img.to_u8().iter().flat_map(|v| [*v, *v, *v, 255]).collect()
}

/// Highlight, midtone and shade regions in three flat colours.
fn mask_rgba(hi: &Mask, mid: &Mask, sha: &Mask) -> Vec<u8> {
    (0..hi.data.len())
        .flat_map(|i| match (hi.data[i], mid.data[i], sha.data[i]) {
            (true, _, _) => [250, 226, 140, 255],
            (_, true, _) => [226, 128, 74, 255],
            (_, _, true) => [62, 70, 130, 255],
            _ => [255, 255, 255, 255],
        })
        .collect()
}

#[wasm_bindgen]
pub struct Demo {
    catalog: Vec<TamFamily>,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new() -> Demo {
        Demo {
            catalog: build_catalog(DEMO_TAM_SIZE),
        }
    }

    /// Family ids, in catalog order.
    pub fn families(&self) -> Vec<String> {
        catalog_ids().into_iter().map(String::from).collect()
    }

    /// Lighting hint for a camera-relative light direction, `size`×`size` RGBA.
    pub fn gnomon(&self, azimuth: f64, elevation: f64, size: usize) -> Result<Vec<u8>, JsError> {
        let light = LightSpec::from_angles(GNOMON_CAMERA_AZIMUTH + azimuth, elevation)?;
        Ok(gray_rgba(&render_gnomon_hint(&light, size)))
    }

    /// Renders one corpus point. `view` is `sketch`, `contour`, `masks` or `diffuse`.
    pub fn render(&self, k: usize, seed: u64, scene: u32, pose: u32, resolution: usize, view: &str) -> Result<Vec<u8>, JsError> {
        let cfg = SubsetConfig {
            resolution,
            ..SubsetConfig::new(k, 1, 4, seed)
        };
        let p = render_point(&cfg, scene, pose, &self.catalog)?;
        let pl = &p.planes;
        Ok(match view {
            "sketch" => gray_rgba(&pl.sk),
            "diffuse" => gray_rgba(&pl.dif),
            "contour" => gray_rgba(&GrayImage::from_fn(resolution, resolution, |x, y| {
                if pl.cnt.get(x, y) {
                    0.0
                } else {
                    1.0
                }
            })),
            "masks" => mask_rgba(&pl.hi, &pl.mid, &pl.sha),
            other => return Err(JsError::new(&format!("unknown view {other:?}"))),
        })
    }

    /// Metadata of the point `render` draws, as JSON.
    pub fn render_meta(&self, k: usize, seed: u64, scene: u32, pose: u32, resolution: usize) -> Result<String, JsError> {
        let cfg = SubsetConfig {
            resolution,
            ..SubsetConfig::new(k, 1, 4, seed)
        };
        let p = render_point(&cfg, scene, pose, &self.catalog)?;
        Ok(serde_json::to_string(&p.meta)?)
    }

    /// The four tones of a family side by side, darkest first.
    pub fn tones(&self, family: &str) -> Result<Vec<u8>, JsError> {
        let fam = shad3s_core::tam::find_family(&self.catalog, family)?;
        let n = DEMO_TAM_SIZE;
        let strip = GrayImage::from_fn(4 * n, n, |x, y| fam.tones[x / n].get(x % n, y));
        Ok(gray_rgba(&strip))
    }
}

impl Default for Demo {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rgba_layout() {
        let img = GrayImage::from_fn(2, 1, |x, _| x as f32);
        assert_eq!(gray_rgba(&img), vec![0, 0, 0, 255, 255, 255, 255, 255]);
        let mut hi = Mask::new(3, 1);
        let mut mid = Mask::new(3, 1);
        let sha = Mask::new(3, 1);
        hi.data[0] = true;
        mid.data[1] = true;
        let px = mask_rgba(&hi, &mid, &sha);
        assert_eq!(px.len(), 12);
        assert_eq!(&px[8..], &[255, 255, 255, 255]);
        assert_ne!(&px[0..4], &px[4..8]);
    }

    #[test]
    fn views_have_the_requested_size() {
        let demo = Demo::new();
        assert_eq!(demo.families().len(), 6);
        assert_eq!(demo.tones("stipple-fine").unwrap().len(), 4 * DEMO_TAM_SIZE * DEMO_TAM_SIZE * 4);
        for view in ["sketch", "contour", "masks", "diffuse"] {
            assert_eq!(demo.render(2, 7, 0, 1, 48, view).unwrap().len(), 48 * 48 * 4, "{view}");
        }
        assert_eq!(demo.gnomon(30.0, 45.0, 64).unwrap().len(), 64 * 64 * 4);
        let meta: serde_json::Value = serde_json::from_str(&demo.render_meta(2, 7, 0, 1, 48).unwrap()).unwrap();
        assert_eq!(meta["k"], 2);
    }

    #[test]
    fn render_matches_the_corpus_renderer() {
        let demo = Demo::new();
        let cfg = SubsetConfig {
            resolution: 40,
            ..SubsetConfig::new(3, 1, 4, 11)
        };
        let p = render_point(&cfg, 0, 2, &demo.catalog).unwrap();
        assert_eq!(demo.render(3, 11, 0, 2, 40, "sketch").unwrap(), gray_rgba(&p.planes.sk));
    }
}
