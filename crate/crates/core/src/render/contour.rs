//! Feature lines from depth and normal discontinuities.

use super::GBuffer;
use crate::raster::Mask;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourParams {
    /// Depth jump, as a fraction of the scene depth range (bounding diameter).
    pub depth_rel: f64,
    /// Normal angle jump in degrees.
    pub normal_deg: f64,
}

impl Default for ContourParams {
    fn default() -> Self {
        Self {
            depth_rel: 0.02,
            normal_deg: 25.0,
        }
    }
}

/// Marks silhouettes, depth discontinuities and creases, then thins the
/// strokes to one pixel. `scene_radius` sets the depth range.
pub fn extract_contours(gb: &GBuffer, params: &ContourParams, scene_radius: f64) -> Mask {
    let (w, h) = (gb.width, gb.height);
    let tau_d = params.depth_rel * 2.0 * scene_radius;
    let cos_n = params.normal_deg.to_radians().cos();
    let mut marks = Mask::new(w, h);
    let idx = |x: usize, y: usize| y * w + x;

    for y in 0..h {
        for x in 0..w {
            let i = idx(x, y);
            // Right and down neighbours cover every adjacent pair once.
            for (nx, ny) in [(x + 1, y), (x, y + 1)] {
                if nx >= w || ny >= h {
                    continue;
                }
                let j = idx(nx, ny);
                let (ci, cj) = (gb.coverage.data[i], gb.coverage.data[j]);
                match (ci, cj) {
                    (false, false) => {}
                    (true, false) => marks.data[i] = true,
                    (false, true) => marks.data[j] = true,
                    (true, true) => {
                        let (di, dj) = (gb.depth[i], gb.depth[j]);
                        let step = dj - di;
                        // A jump only counts if it also breaks the local depth
                        // slope; grazing but continuous surfaces change depth fast.
                        let (dx, dy) = (nx - x, ny - y);
                        let before = (x >= dx && y >= dy).then(|| idx(x - dx, y - dy));
                        let after = (nx + dx < w && ny + dy < h).then(|| idx(nx + dx, ny + dy));
                        let slope_ok = |k: Option<usize>, d: &dyn Fn(usize) -> f64| {
                            k.filter(|k| gb.coverage.data[*k]).is_none_or(|k| (step - d(k)).abs() > tau_d)
                        };
                        let jump = step.abs() > tau_d
                            && slope_ok(before, &|k| di - gb.depth[k])
                            && slope_ok(after, &|k| gb.depth[k] - dj);
                        let crease = gb.normals[i].dot(gb.normals[j]) < cos_n;
                        if jump || crease {
                            let nearer = if di <= dj { i } else { j };
                            marks.data[nearer] = true;
                        }
                    }
                }
            }
        }
    }
    // Object pixels on the image border close the outline.
    for y in 0..h {
        for x in 0..w {
            if (x == 0 || y == 0 || x == w - 1 || y == h - 1) && gb.coverage.data[idx(x, y)] {
                marks.data[idx(x, y)] = true;
            }
        }
    }
    thin(&marks)
}

/// Zhang-Suen thinning.
pub fn thin(mask: &Mask) -> Mask {
    let (w, h) = (mask.width, mask.height);
    let mut m = mask.clone();
    if w < 3 || h < 3 {
        return m;
    }
    let get = |m: &Mask, x: isize, y: isize| -> u8 {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0
        } else {
            m.get(x as usize, y as usize) as u8
        }
    };
    loop {
        let mut changed = false;
        for pass in 0..2 {
            let mut remove = Vec::new();
            for y in 0..h as isize {
                for x in 0..w as isize {
                    if get(&m, x, y) == 0 {
                        continue;
                    }
                    // P2..P9 clockwise from north.
                    let p = [
                        get(&m, x, y - 1),
                        get(&m, x + 1, y - 1),
                        get(&m, x + 1, y),
                        get(&m, x + 1, y + 1),
                        get(&m, x, y + 1),
                        get(&m, x - 1, y + 1),
                        get(&m, x - 1, y),
                        get(&m, x - 1, y - 1),
                    ];
                    let b: u8 = p.iter().sum();
                    if !(2..=6).contains(&b) {
                        continue;
                    }
                    let a = (0..8).filter(|&k| p[k] == 0 && p[(k + 1) % 8] == 1).count();
                    if a != 1 {
                        continue;
                    }
                    let (p2, p4, p6, p8) = (p[0], p[2], p[4], p[6]);
                    let ok = if pass == 0 {
                        p2 * p4 * p6 == 0 && p4 * p6 * p8 == 0
                    } else {
                        p2 * p4 * p8 == 0 && p2 * p6 * p8 == 0
                    };
                    if ok {
                        remove.push((x as usize, y as usize));
                    }
                }
            }
            for (x, y) in &remove {
                m.set(*x, *y, false);
            }
            changed |= !remove.is_empty();
        }
        if !changed {
            return m;
        }
    }
}
