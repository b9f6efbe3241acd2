//! Property tests of the module invariants.

use proptest::prelude::*;
use twobounce_core::field::{render_depth, DensityGrid, SamplingConfig};
use twobounce_core::math::{Aabb, Ray, Vec3};
use twobounce_core::rng::StreamRng;
use twobounce_core::scene::{Primitive, Scene, Shape};
use twobounce_core::signal::threshold_shadow;
use twobounce_core::transient::{downsample_spatial, downsample_temporal, TransientImage};

fn transient_strategy() -> impl Strategy<Value = TransientImage> {
    (1u32..=4, 1u32..=4, 1u32..=3, any::<u64>()).prop_map(|(wu, wv, wt, seed)| {
        // Dimensions divisible by 2, 4, and 8.
        let (nu, nv, nt) = (8 * wu, 8 * wv, 16 * wt);
        let mut img = TransientImage::zeroed(nu, nv, nt, 128e-12, 0.0, 0).unwrap();
        let mut rng = StreamRng::from_key(&[seed]);
        for slot in img.data.iter_mut() {
            *slot = rng.next_range(0.0, 50.0) as f32;
        }
        img
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn temporal_downsample_conserves_total(img in transient_strategy(), factor in prop_oneof![Just(2u32), Just(4), Just(8)]) {
        let down = downsample_temporal(&img, factor).unwrap();
        let before = img.total_count();
        let after = down.total_count();
        prop_assert!((before - after).abs() <= 1e-6 * before.max(1.0), "{before} vs {after}");
        prop_assert_eq!(down.nt, img.nt / factor);
    }

    #[test]
    fn spatial_downsample_conserves_total(img in transient_strategy(), factor in prop_oneof![Just(2u32), Just(4)]) {
        let down = downsample_spatial(&img, factor).unwrap();
        let before = img.total_count();
        let after = down.total_count();
        prop_assert!((before - after).abs() <= 1e-6 * before.max(1.0), "{before} vs {after}");
    }

    #[test]
    fn shadow_threshold_masks_nest(confs in proptest::collection::vec(0.0f64..1.0, 1..200), t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let loose = threshold_shadow(&confs, lo);
        let tight = threshold_shadow(&confs, hi);
        // Raising the threshold never lights a new pixel.
        for (a, b) in loose.iter().zip(tight.iter()) {
            prop_assert!(!(*b && !*a));
        }
    }

    #[test]
    fn segment_visibility_symmetric(
        ax in -3.0f64..3.0, ay in -3.0f64..3.0, az in -3.0f64..3.0,
        bx in -3.0f64..3.0, by in -3.0f64..3.0, bz in -3.0f64..3.0,
        cx in -1.0f64..1.0, cy in -1.0f64..1.0, cz in -1.0f64..1.0,
        r in 0.1f64..0.8,
    ) {
        let scene = Scene::new(
            vec![Primitive { shape: Shape::Sphere { center: Vec3::new(cx, cy, cz), radius: r }, albedo: 0.5 }],
            0.0,
        ).unwrap();
        let a = Vec3::new(ax, ay, az);
        let b = Vec3::new(bx, by, bz);
        prop_assume!(a.distance(b) > 1e-6);
        prop_assert_eq!(scene.segment_visible(a, b), scene.segment_visible(b, a));
    }

    #[test]
    fn compositing_stays_in_bounds(seed in any::<u64>(), ox in -0.5f64..1.5, oy in -0.5f64..1.5, dz in -1.0f64..1.0) {
        let mut grid = DensityGrid::new([5, 5, 5], Aabb::new(Vec3::splat(0.0), Vec3::splat(1.0)), 0.05).unwrap();
        let mut rng = StreamRng::from_key(&[seed]);
        for t in grid.raw_mut() {
            *t = rng.next_range(-4.0, 3.0);
        }
        let dir = Vec3::new(1.0, 0.3, dz).normalized().unwrap();
        let cfg = SamplingConfig { coarse: 16, fine: 8, near: 0.0, far: 2.0, stratified: false };
        let r = render_depth(&grid, &Ray::new(Vec3::new(ox, oy, 0.5), dir), &cfg, None);
        prop_assert!(r.weight_sum >= 0.0 && r.weight_sum <= 1.0 + 1e-12);
        prop_assert!(r.depth >= 0.0 && r.depth <= 2.0 + 1e-12);
        for w in r.cache.trans.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-15);
        }
    }
}
