use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shad3s_core::csg::{
    parse_scene, sample_scene, serialize_scene, BoolOp, CsgNode, CsgScene, Primitive, Transform,
};
use shad3s_core::math::{Quat, Vec3};

#[test]
fn distance_sign_agrees_with_membership() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut checked = 0;
    for seed in 0..100u64 {
        let scene = sample_scene(seed, 6).unwrap();
        let (c, r) = scene.bounding_sphere();
        for _ in 0..100 {
            let p = c + Vec3::new(
                rng.random_range(-r..r),
                rng.random_range(-r..r),
                rng.random_range(-r..r),
            );
            let d = scene.signed_distance(p);
            if d.abs() < 1e-9 {
                continue;
            }
            assert_eq!(d < 0.0, scene.contains(p), "seed {seed} at {p:?}: d = {d}");
            checked += 1;
        }
    }
    assert!(checked >= 9_990);
}

#[test]
fn difference_matches_voxel_oracle() {
    // Sphere of radius 1 minus a box poking out of its +x side.
    let sphere = CsgNode::leaf(Primitive::Sphere { radius: 1.0 }, Transform::default());
    let cutter = CsgNode::leaf(
        Primitive::Box {
            half: Vec3::new(0.6, 0.3, 0.4),
        },
        Transform::translate(Vec3::new(0.8, 0.1, 0.0)),
    );
    let scene = CsgScene::new(CsgNode::op(BoolOp::Difference, sphere, cutter));
    let inside = |p: Vec3| {
        let in_sphere = p.x * p.x + p.y * p.y + p.z * p.z < 1.0;
        let q = p - Vec3::new(0.8, 0.1, 0.0);
        let in_box = q.x.abs() < 0.6 && q.y.abs() < 0.3 && q.z.abs() < 0.4;
        in_sphere && !in_box
    };
    let n = 64;
    let (mut agree, mut total, mut volume) = (0, 0, 0);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let f = |v: usize| -1.2 + 2.4 * (v as f64 + 0.5) / n as f64;
                let p = Vec3::new(f(i), f(j), f(k));
                let d = scene.signed_distance(p);
                if d.abs() < 1e-12 {
                    continue;
                }
                total += 1;
                agree += ((d < 0.0) == inside(p)) as usize;
                volume += inside(p) as usize;
            }
        }
    }
    assert_eq!(agree, total);
    // The cut removes a visible chunk: well below the full sphere volume.
    let voxel = (2.4 / n as f64).powi(3);
    let full = 4.0 / 3.0 * std::f64::consts::PI;
    assert!((volume as f64 * voxel) < 0.95 * full);
}

#[test]
fn thousand_scenes_round_trip() {
    for seed in 0..1000u64 {
        let s = sample_scene(seed * 7919, 1 + (seed % 6) as usize).unwrap();
        let text = serialize_scene(&s);
        assert_eq!(parse_scene(&text).unwrap(), s, "seed {seed}:\n{text}");
    }
}

#[test]
fn leaf_count_is_uniform() {
    let mut counts = [0usize; 6];
    let n = 10_000;
    for seed in 0..n as u64 {
        counts[sample_scene(seed, 6).unwrap().leaf_count() - 1] += 1;
    }
    let expected = n as f64 / 6.0;
    let chi2: f64 = counts.iter().map(|c| (*c as f64 - expected).powi(2) / expected).sum();
    for c in counts {
        assert!((c as f64 / n as f64 - 1.0 / 6.0).abs() <= 0.02, "{counts:?}");
    }
    // 5 degrees of freedom, p = 0.001.
    assert!(chi2 < 20.515, "chi2 {chi2} for {counts:?}");
}

#[test]
fn rotated_scaled_box_matches_closed_form() {
    let q = Quat::from_axis_angle(Vec3::new(1.0, 2.0, 0.5).normalized(), 0.7);
    let xf = Transform {
        translation: Vec3::new(0.3, 1.0, -0.2),
        rotation: q,
        scale: 1.7,
    };
    let s = CsgScene::new(CsgNode::leaf(Primitive::Box { half: Vec3::new(0.5, 0.2, 0.3) }, xf));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let p = Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-1.0..3.0), rng.random_range(-2.0..2.0));
        let l = q.inverse_rotate(p - xf.translation) / 1.7;
        let d = l.abs() - Vec3::new(0.5, 0.2, 0.3);
        let outside = Vec3::new(d.x.max(0.0), d.y.max(0.0), d.z.max(0.0)).length();
        let expect = 1.7 * (outside + d.x.max(d.y).max(d.z).min(0.0));
        assert!((s.signed_distance(p) - expect).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn distance_is_one_lipschitz(
        seed in 0u64..5000,
        a in prop::array::uniform3(-4.0f64..4.0),
        b in prop::array::uniform3(-4.0f64..4.0),
    ) {
        let s = sample_scene(seed, 6).unwrap();
        let (p, q) = (Vec3::new(a[0], a[1], a[2]), Vec3::new(b[0], b[1], b[2]));
        let gap = (s.signed_distance(p) - s.signed_distance(q)).abs();
        prop_assert!(gap <= (p - q).length() * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn sampled_scenes_rest_above_ground(seed in any::<u64>(), k in 1usize..=6) {
        let s = sample_scene(seed, k).unwrap();
        prop_assert!(s.leaf_count() <= k);
        prop_assert!(s.root.min_y() >= s.ground_plane - 1e-9);
        prop_assert_eq!(parse_scene(&serialize_scene(&s)).unwrap(), s);
    }
}
