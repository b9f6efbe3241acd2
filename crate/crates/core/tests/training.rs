//! Training-behavior integration tests at reduced scale.

use twobounce_core::field::{render_transmittance, SamplingConfig};
use twobounce_core::field::DensityGrid;
use twobounce_core::math::{Ray, Vec3};
use twobounce_core::recon::{build_dataset, optimize, render_depth_view, SampleTarget, TrainConfig, TrainingSample};
use twobounce_core::scene::{CameraModel, IlluminationPlan, LidarRig, Scene};
use twobounce_core::signal::preprocess_view;
use twobounce_core::transient::{simulate_view, NoiseModel, PulseModel, SPEED_OF_LIGHT};

const T_RES: f64 = 128e-12;

/// All-lit analytic plane data: depth-only optimization recovers the plane
/// within half a timing bin per pixel.
#[test]
fn depth_only_training_recovers_a_plane() {
    let wall_z = -2.0;
    let cam = CameraModel::look_at(
        Vec3::new(0.0, 0.0, 1.0),
        Vec3::new(0.0, 0.0, -1.0),
        Vec3::new(0.0, 1.0, 0.0),
        0.7,
        16,
        16,
    )
    .unwrap();
    let laser = Vec3::new(0.005, 0.0, 1.0);
    let spots = [Vec3::new(-1.2, 0.3, wall_z), Vec3::new(1.2, -0.3, wall_z)];

    // Exact two-bounce arrival times from the plane geometry.
    let mut dataset = Vec::new();
    for l in spots {
        let d1 = laser.distance(l);
        for u in 0..16 {
            for v in 0..16 {
                let ray = cam.pixel_ray(u, v).unwrap();
                let t_hit = (wall_z - ray.origin.z) / ray.dir.z;
                let x_p = ray.at(t_hit);
                let t_peak = (d1 + l.distance(x_p) + t_hit) / SPEED_OF_LIGHT;
                dataset.push(TrainingSample {
                    origin: ray.origin,
                    dir: ray.dir,
                    l,
                    d1,
                    k: 0,
                    target: SampleTarget::Lit { t_peak },
                });
            }
        }
    }

    let bounds = twobounce_core::math::Aabb::new(Vec3::new(-1.5, -1.5, -2.35), Vec3::new(1.5, 1.5, 1.1));
    let mut grid = DensityGrid::new([64, 64, 64], bounds, 0.01).unwrap();
    let cfg = TrainConfig {
        iterations: 12_000,
        warmup_iters: 11_999,
        beta: 0.0,
        batch_size: 256,
        lr: 2e-2,
        lr_final: 2e-3,
        sampling: SamplingConfig { coarse: 32, fine: 24, near: 0.05, far: 4.5, stratified: true },
        seed: 11,
        deterministic: true,
    };
    let history = optimize(&mut grid, &dataset, &cfg, |_| {}).unwrap();
    assert!(history.iter().all(|r| r.total.is_finite()));

    // Dense deterministic strata for evaluation: the field was trained under
    // stratified jitter, so fixed coarse centers must be tight enough not to
    // skip the thin density skin at the wall.
    let eval_sampling = SamplingConfig { coarse: 96, fine: 96, near: 0.05, far: 4.5, stratified: false };
    let img = render_depth_view(&grid, &cam, &eval_sampling);
    let tol = SPEED_OF_LIGHT * T_RES / 2.0; // 1.92 cm
    let mut worst: f64 = 0.0;
    for u in 0..16u32 {
        for v in 0..16u32 {
            let idx = (u * 16 + v) as usize;
            assert!(img.valid[idx], "pixel ({u}, {v}) rendered no surface");
            let ray = cam.pixel_ray(u, v).unwrap();
            let truth = (wall_z - ray.origin.z) / ray.dir.z;
            worst = worst.max((img.values[idx] - truth).abs());
        }
    }
    assert!(worst <= tol, "worst per-pixel depth error {worst} m exceeds {tol} m");
}

fn small_reference() -> (Scene, LidarRig) {
    let file = twobounce_core::reference::desk_scene_file();
    let (scene, rig) = file.build().unwrap();
    // Same optics at 32x32 for speed.
    let cam = CameraModel::look_at(
        Vec3::new(0.0, 0.0, 1.7),
        Vec3::new(0.0, 0.0, 0.0),
        Vec3::new(0.0, 1.0, 0.0),
        75.0f64.to_radians(),
        32,
        32,
    )
    .unwrap();
    // Re-resolve the illumination plan at the reduced resolution.
    let mut pixels = Vec::new();
    for &u in &[0u32, 1, 2, 3] {
        for &v in &[10u32, 22] {
            pixels.push([u, v]);
        }
    }
    for &u in &[31u32, 30, 29, 28] {
        for &v in &[10u32, 22] {
            pixels.push([u, v]);
        }
    }
    let rig_small = LidarRig::resolve(cam, rig.laser_position, &IlluminationPlan::Pixels(pixels), &scene).unwrap();
    (scene, rig_small)
}

/// Reduced-scale end-to-end training: warmup drives the arrival-time loss
/// well below its early value, and the shadow probabilities separate lit
/// from shadowed samples after convergence.
#[test]
fn reference_training_dynamics_at_reduced_scale() {
    let (scene, rig) = small_reference();
    let pulse = PulseModel::new(128e-12, 1000.0).unwrap();
    let noise = NoiseModel::noiseless();
    let mut views = Vec::new();
    for k in 0..rig.spot_count() {
        let sim = simulate_view(&scene, &rig, k, &pulse, &noise, 391, T_RES, 0.0).unwrap();
        assert_eq!(sim.clipped_pulses, 0, "view {k} clipped");
        views.push(
            preprocess_view(
                &sim.transient,
                &rig.camera,
                sim.truth.l,
                sim.truth.d1,
                &pulse,
                0.15,
                0.5f64.to_radians(),
            )
            .unwrap(),
        );
    }
    let dataset = build_dataset(&views, &rig).unwrap();
    let lit = dataset.iter().filter(|s| matches!(s.target, SampleTarget::Lit { .. })).count();
    assert!(lit > 2000, "dataset has {lit} lit samples");
    assert!(dataset.len() - lit > 100, "dataset needs shadowed samples");

    let mut grid = DensityGrid::new([64, 64, 64], scene.bounds, 0.01).unwrap();
    let cfg = TrainConfig {
        iterations: 6000,
        warmup_iters: 1200,
        beta: 1.0 / 6000.0,
        batch_size: 512,
        lr: 2e-2,
        lr_final: 2e-3,
        sampling: SamplingConfig { coarse: 40, fine: 24, near: 0.05, far: 6.5, stratified: true },
        seed: 7,
        deterministic: true,
    };
    let history = optimize(&mut grid, &dataset, &cfg, |_| {}).unwrap();

    let at = |iter: usize| {
        history
            .iter()
            .find(|r| r.iter == iter)
            .unwrap_or_else(|| panic!("no history row at {iter}"))
    };
    let early = at(100).l_primary;
    let warm = at(cfg.warmup_iters).l_primary;
    assert!(
        warm <= 0.2 * early,
        "arrival-time loss at warmup end {warm} vs early {early}"
    );
    for row in &history {
        if row.iter < cfg.warmup_iters {
            assert_eq!(row.total, row.l_primary, "shadow loss weighted before warmup");
        }
    }

    // Shadow probabilities separate after training.
    let sec_cfg = SamplingConfig { coarse: 12, fine: 0, near: 0.05, far: 6.5, stratified: false };
    let mut lit_p = Vec::new();
    let mut shadow_p = Vec::new();
    for (i, s) in dataset.iter().enumerate() {
        if i % 7 != 0 {
            continue; // subsample for speed
        }
        let ray = Ray::new(s.origin, s.dir);
        let d = twobounce_core::field::render_depth(&grid, &ray, &cfg.sampling, None);
        let x_p = s.origin + s.dir * d.depth;
        if let Ok(tr) = render_transmittance(&grid, x_p, s.l, &sec_cfg, None) {
            match s.target {
                SampleTarget::Lit { .. } => lit_p.push(tr.p),
                SampleTarget::Shadow => shadow_p.push(tr.p),
            }
        }
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len().max(1) as f64;
    let lit_mean = mean(&lit_p);
    let shadow_mean = mean(&shadow_p);
    // Directional separation at this reduced budget; the full-scale
    // invariant (lit >= 0.8, shadow <= 0.2) runs in the acceptance suite.
    assert!(lit_mean >= 0.5, "mean transmittance over lit samples {lit_mean}");
    assert!(shadow_mean <= 0.25, "mean transmittance over shadowed samples {shadow_mean}");
    assert!(lit_mean - shadow_mean >= 0.35, "separation too weak: {lit_mean} vs {shadow_mean}");

    // Every lit sample's arrival time respects the geometric lower bound
    // d1 + d3_min (the shortest camera-to-scene distance).
    let d3_min = {
        let mut best = f64::INFINITY;
        let cam = &rig.camera;
        for u in 0..cam.nu {
            for v in 0..cam.nv {
                if let Some(h) = scene.ray_intersect(&cam.pixel_ray(u, v).unwrap()) {
                    best = best.min(h.t);
                }
            }
        }
        best
    };
    for s in &dataset {
        if let SampleTarget::Lit { t_peak } = s.target {
            assert!(
                t_peak >= (s.d1 + d3_min) / SPEED_OF_LIGHT - T_RES,
                "lit arrival below the geometric bound"
            );
        }
    }
}
