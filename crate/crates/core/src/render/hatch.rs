//! Six-tone cel shading with tonal-art-map textures.

use crate::raster::{GrayImage, Mask};

pub const HATCH_BINS: usize = 6;

/// Uniform tone bin of a diffuse value: 0 (black) .. 5 (white).
pub fn tone_bin(dif: f32) -> usize {
    ((dif.clamp(0.0, 1.0) * HATCH_BINS as f32) as usize).min(HATCH_BINS - 1)
}

fn tile(tex: &GrayImage, x: usize, y: usize) -> f32 {
    tex.get(x % tex.width, y % tex.height)
}

/// Composites the sketch render.
///
/// `tones[0]` is the darkest textured tone (bin 1), `tones[3]` the lightest
/// (bin 4). Cast shadows take tone 1; contours are drawn black on top.
pub fn render_hatch(
    dif: &GrayImage,
    coverage: &Mask,
    shw: &Mask,
    cnt: &Mask,
    tones: &[GrayImage; 4],
    background_hatch: bool,
) -> GrayImage {
    let (w, h) = (dif.width, dif.height);
    GrayImage::from_fn(w, h, |x, y| {
        let i = y * w + x;
        if cnt.data[i] {
            return 0.0;
        }
        if coverage.data[i] {
            return match tone_bin(dif.data[i]) {
                0 => 0.0,
                b if b == HATCH_BINS - 1 => 1.0,
                b => tile(&tones[b - 1], x, y),
            };
        }
        if shw.data[i] {
            return tile(&tones[0], x, y);
        }
        if background_hatch {
            tile(&tones[2], x, y)
        } else {
            1.0
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tones() -> [GrayImage; 4] {
        // Stripes with nested ink: tone k inks columns with x % 5 < 4 - k.
        std::array::from_fn(|k| GrayImage::from_fn(5, 5, |x, _| if x % 5 < 4 - k { 0.0 } else { 1.0 }))
    }

    #[test]
    fn bins_are_uniform() {
        assert_eq!(tone_bin(0.0), 0);
        assert_eq!(tone_bin(0.999), 5);
        assert_eq!(tone_bin(1.0), 5);
        assert_eq!(tone_bin(0.5), 3);
        assert_eq!(tone_bin(1.0 / 6.0 - 1e-4), 0);
    }

    #[test]
    fn extremes_are_white_and_black() {
        let cov = Mask {
            width: 2,
            height: 1,
            data: vec![true, true],
        };
        let dif = GrayImage {
            width: 2,
            height: 1,
            data: vec![1.0, 0.0],
        };
        let none = Mask::new(2, 1);
        let sk = render_hatch(&dif, &cov, &none, &none, &tones(), false);
        assert_eq!(sk.data, vec![1.0, 0.0]);
    }

    #[test]
    fn contour_overrides_and_background_options() {
        let dif = GrayImage::new(3, 1);
        let cov = Mask::new(3, 1);
        let mut cnt = Mask::new(3, 1);
        cnt.data[0] = true;
        let mut shw = Mask::new(3, 1);
        shw.data[1] = true;
        let t = tones();
        let plain = render_hatch(&dif, &cov, &shw, &cnt, &t, false);
        assert_eq!(plain.data[0], 0.0);
        assert_eq!(plain.data[1], t[0].get(1, 0));
        assert_eq!(plain.data[2], 1.0);
        let bg = render_hatch(&dif, &cov, &shw, &cnt, &t, true);
        assert_eq!(bg.data[2], t[2].get(2, 0));
    }
}
