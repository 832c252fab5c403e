use shad3s_core::raster::GrayImage;
use shad3s_core::tam::{
    build_catalog, crop, crop_origin, load_catalog, save_family, synthesize_tam_with, validate_tam, TamParams,
    TamStyle, INK_THRESHOLD,
};

/// Separable box blur with wrap-around, radius `r`.
fn box_blur(img: &GrayImage, r: usize) -> GrayImage {
    let (w, h) = (img.width, img.height);
    let k = (2 * r + 1) as f32;
    let horiz = GrayImage::from_fn(w, h, |x, y| {
        (0..=2 * r).map(|d| img.get((x + w + d - r) % w, y)).sum::<f32>() / k
    });
    GrayImage::from_fn(w, h, |x, y| (0..=2 * r).map(|d| horiz.get(x, (y + h + d - r) % h)).sum::<f32>() / k)
}

/// Dominant stroke orientation in degrees [0, 180), counter-clockwise from
/// +x with y up, from a magnitude-weighted histogram of Sobel gradient angles
/// on a blurred copy (blurring removes the pixel-staircase bias).
fn stroke_orientation(img: &GrayImage) -> f64 {
    let img = &box_blur(&box_blur(img, 2), 2);
    let mut hist = [0.0f64; 180];
    for y in 1..img.height - 1 {
        for x in 1..img.width - 1 {
            let p = |dx: i64, dy: i64| img.get((x as i64 + dx) as usize, (y as i64 + dy) as usize) as f64;
            let gx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            // Flip so that +y points up.
            let gy = -((p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1)));
            let m = (gx * gx + gy * gy).sqrt();
            if m < 1e-6 {
                continue;
            }
            let a = gy.atan2(gx).to_degrees().rem_euclid(180.0);
            hist[(a as usize).min(179)] += m;
        }
    }
    let smooth = |i: usize| (0..5).map(|k| hist[(i + 180 + k - 2) % 180]).sum::<f64>();
    let peak = (0..180).max_by(|a, b| smooth(*a).total_cmp(&smooth(*b))).unwrap();
    (peak as f64 + 0.5 + 90.0) % 180.0
}

fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(180.0);
    d.min(180.0 - d)
}

#[test]
fn parallel_strokes_follow_configured_angle() {
    for (seed, angle) in [(1u64, 45.0), (2, 110.0), (3, 0.0), (4, 160.0), (5, 75.0)] {
        let params = TamParams {
            size: 512,
            angle_deg: angle,
            ..TamParams::default()
        };
        let fam = synthesize_tam_with(seed, TamStyle::Parallel, &params);
        for (k, tone) in fam.tones.iter().enumerate() {
            let got = stroke_orientation(tone);
            assert!(angle_gap(got, angle) <= 5.0, "angle {angle}, tone {}: measured {got}", k + 1);
        }
    }
}

#[test]
fn shipped_families_validate_without_violations() {
    let cat = build_catalog(1024);
    assert_eq!(cat.len(), 6);
    for fam in &cat {
        assert!(fam.tones[0].width >= 1024);
        let r = validate_tam(&fam.tones).unwrap();
        assert!(r.accepted, "{}: {r:?}", fam.id);
        assert_eq!(r.max_violation, 0.0, "{}", fam.id);
    }
}

#[test]
fn reversed_tones_are_rejected() {
    let fam = &build_catalog(128)[0];
    let mut rev = fam.tones.clone();
    rev.reverse();
    assert!(!validate_tam(&rev).unwrap().accepted);
}

#[test]
fn one_percent_flipped_pixels_are_rejected() {
    let fam = &build_catalog(256)[1];
    let mut tones = fam.tones.clone();
    let n = tones[3].data.len();
    let target = n / 100;
    let mut flipped = 0;
    // Ink pixels of the lightest tone that the next tone leaves blank.
    for i in (0..n).step_by(7) {
        if flipped == target {
            break;
        }
        if tones[2].data[i] >= INK_THRESHOLD && tones[3].data[i] >= INK_THRESHOLD {
            tones[3].data[i] = 0.0;
            flipped += 1;
        }
    }
    assert_eq!(flipped, target);
    let r = validate_tam(&tones).unwrap();
    assert!(r.coverage_monotone);
    assert!((r.nesting_violation[2] - 0.01).abs() < 1e-3, "{r:?}");
    assert!(!r.accepted);
}

#[test]
fn crop_window_is_uniform() {
    // 1024 texels, 256 window: 769 positions per axis.
    let positions = 769;
    let bins = 25;
    let draws = 50_000;
    let mut cx = vec![0usize; bins];
    let mut cy = vec![0usize; bins];
    for seed in 0..draws as u64 {
        let (x, y) = crop_origin(1024, 1024, seed, 256);
        assert!(x < positions && y < positions);
        cx[x * bins / positions] += 1;
        cy[y * bins / positions] += 1;
    }
    let per_bin: Vec<f64> = (0..bins)
        .map(|b| (0..positions).filter(|p| p * bins / positions == b).count() as f64 / positions as f64 * draws as f64)
        .collect();
    for counts in [cx, cy] {
        let chi2: f64 = counts.iter().zip(&per_bin).map(|(c, e)| (*c as f64 - e).powi(2) / e).sum();
        // 24 degrees of freedom, p = 0.001.
        assert!(chi2 < 51.179, "chi2 {chi2}");
    }
}

#[test]
fn crops_are_aligned_deterministic_and_nested() {
    let cat = build_catalog(256);
    let a = crop(&cat[3], 99, 64).unwrap();
    assert_eq!(a, crop(&cat[3], 99, 64).unwrap());
    assert_eq!(validate_tam(&a).unwrap().max_violation, 0.0);
    assert!(crop(&cat[3], 99, 257).is_err());
}

#[test]
fn catalog_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let cat = build_catalog(64);
    for fam in &cat {
        save_family(dir.path(), fam).unwrap();
    }
    let loaded = load_catalog(dir.path()).unwrap();
    assert_eq!(loaded.len(), 6);
    for (a, b) in cat.iter().zip(&loaded) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.meta, b.meta);
        assert_eq!(a.tones, b.tones);
    }
}
