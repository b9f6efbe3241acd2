//! End-to-end pipeline: simulate -> preprocess -> train -> eval -> mesh,
//! plus the ablation sweeps. Every command reads one `RunConfig`, writes
//! into its output directory, and copies the config alongside the outputs
//! for provenance. With the deterministic flag set, outputs are
//! byte-identical across runs and thread counts.

use crate::eval::{
    behind_object_mask, chamfer, l1_depth, occupancy_iou, orbit_poses, psnr_depth, region_from_bounds,
    scene_depth_image, scene_occupancy, scene_point_cloud, PointCloud,
};
use crate::field::{extract_occupancy, DensityGrid, SamplingConfig};
use crate::io;
use crate::math::{Aabb, Vec3};
use crate::recon::{build_dataset, extract_mesh, optimize, render_depth_view, TrainConfig};
use crate::scene::{LidarRig, Scene, SceneFile};
use crate::signal::{estimate_d1, preprocess_view, PreprocessedView, PulseTemplate};
use crate::transient::{downsample_spatial, downsample_temporal, simulate_view, NoiseModel, PulseModel};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Simulation parameters (times in ps/ns for config ergonomics).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_t: u32,
    pub t_res_ps: f64,
    pub t_start_ns: f64,
    pub pulse_fwhm_ps: f64,
    pub pulse_amplitude: f64,
    pub ambient_rate: f64,
    pub poisson_sampling: bool,
}

impl SimConfig {
    pub fn t_res(&self) -> f64 {
        self.t_res_ps * 1e-12
    }

    pub fn t_start(&self) -> f64 {
        self.t_start_ns * 1e-9
    }

    pub fn pulse(&self) -> Result<PulseModel> {
        PulseModel::new(self.pulse_fwhm_ps * 1e-12, self.pulse_amplitude)
    }
}

/// Where the per-view spot position and laser distance come from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpotSource {
    /// Use the exact values recorded by the simulator.
    Manifest,
    /// Recover them from the one-bounce return (colocated rigs only).
    Estimate,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub shadow_threshold: f64,
    pub one_bounce_angle_deg: f64,
    pub spot_source: SpotSource,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainRunConfig {
    pub iterations: usize,
    pub warmup_iters: usize,
    pub beta: f64,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_final: f64,
    pub grid_resolution: [usize; 3],
    pub coarse_samples: usize,
    pub fine_samples: usize,
    pub near: f64,
    pub far: f64,
    pub stratified: bool,
    pub deterministic: bool,
    /// Grid density at initialization.
    pub init_sigma: f64,
}

impl TrainRunConfig {
    pub fn sampling(&self) -> SamplingConfig {
        SamplingConfig {
            coarse: self.coarse_samples,
            fine: self.fine_samples,
            near: self.near,
            far: self.far,
            stratified: self.stratified,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            iterations: self.iterations,
            warmup_iters: self.warmup_iters,
            beta: self.beta,
            batch_size: self.batch_size,
            lr: self.lr,
            lr_final: self.lr_final,
            sampling: self.sampling(),
            seed,
            deterministic: self.deterministic,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalConfig {
    /// JSON list of camera models; when absent an orbit is generated.
    pub poses: Option<PathBuf>,
    pub orbit_views: usize,
    pub orbit_center: [f64; 3],
    pub orbit_radius: f64,
    pub orbit_height: f64,
    /// Density threshold for occupancy extraction.
    pub sigma_threshold: f64,
    pub mesh_isolevel: f64,
    /// Points sampled per cloud for the Chamfer distance.
    pub chamfer_points: usize,
    pub occupancy_resolution: [usize; 3],
    /// Optional box (min/max) for a focused occupancy IoU, e.g. around an
    /// occluded object.
    pub region_min: Option<[f64; 3]>,
    pub region_max: Option<[f64; 3]>,
}

/// One config drives every subcommand.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    pub scene: PathBuf,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Worker threads; 0 uses the rayon default.
    pub threads: usize,
    pub simulation: SimConfig,
    pub preprocess: PreprocessConfig,
    pub train: TrainRunConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    /// Desk-scale defaults for a given scene file.
    pub fn desk_defaults(scene: PathBuf, output_dir: PathBuf) -> RunConfig {
        RunConfig {
            scene,
            output_dir,
            seed: 7,
            threads: 0,
            simulation: SimConfig {
                n_t: 391,
                t_res_ps: 128.0,
                t_start_ns: 0.0,
                pulse_fwhm_ps: 128.0,
                pulse_amplitude: 1000.0,
                ambient_rate: 0.0,
                poisson_sampling: false,
            },
            preprocess: PreprocessConfig {
                shadow_threshold: 0.15,
                one_bounce_angle_deg: 0.5,
                spot_source: SpotSource::Manifest,
            },
            train: TrainRunConfig {
                iterations: 20_000,
                warmup_iters: 2_500,
                beta: 1.0 / 6000.0,
                batch_size: 1024,
                // Grid-scale learning rate: raw voxel parameters span tens of
                // units, so the rate is far above typical MLP settings.
                lr: 2e-2,
                lr_final: 2e-3,
                grid_resolution: [96, 96, 96],
                coarse_samples: 40,
                fine_samples: 24,
                near: 0.05,
                far: 6.5,
                stratified: true,
                deterministic: true,
                init_sigma: 0.01,
            },
            eval: EvalConfig {
                poses: None,
                orbit_views: 120,
                orbit_center: [0.3, -0.2, -0.9],
                orbit_radius: 0.9,
                orbit_height: 0.9,
                sigma_threshold: 3.0,
                mesh_isolevel: 3.0,
                chamfer_points: 100_000,
                occupancy_resolution: [96, 96, 96],
                region_min: None,
                region_max: None,
            },
        }
    }

    /// Full-scale preset: the long training schedule for high-resolution
    /// sensors (hours of compute; kept for completeness).
    pub fn full_scale(scene: PathBuf, output_dir: PathBuf) -> RunConfig {
        let mut cfg = RunConfig::desk_defaults(scene, output_dir);
        cfg.train.iterations = 200_000;
        cfg.train.warmup_iters = 25_000;
        cfg.train.grid_resolution = [192, 192, 192];
        cfg.eval.occupancy_resolution = [192, 192, 192];
        cfg
    }

    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization cannot fail")
    }
}

/// Run a closure in a rayon pool of the configured width.
pub fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if threads > 0 {
        builder = builder.num_threads(threads);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path)?;
    Ok(())
}

fn copy_config(cfg: &RunConfig, dir: &Path) -> Result<()> {
    std::fs::write(dir.join("config.json"), cfg.to_json())?;
    Ok(())
}

fn load_scene(cfg: &RunConfig) -> Result<(Scene, LidarRig, SceneFile)> {
    let text = std::fs::read_to_string(&cfg.scene)
        .map_err(|e| Error::Config(format!("scene {}: {e}", cfg.scene.display())))?;
    let file = SceneFile::from_json(&text)?;
    let (scene, rig) = file.build()?;
    Ok((scene, rig, file))
}

pub fn transient_path(dir: &Path, k: u32) -> PathBuf {
    dir.join(format!("transients/view_{k:03}.tr"))
}

pub fn truth_path(dir: &Path, k: u32) -> PathBuf {
    dir.join(format!("truth/view_{k:03}.gt"))
}

pub fn preprocessed_path(dir: &Path, k: u32) -> PathBuf {
    dir.join(format!("preprocessed/view_{k:03}.pp"))
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join("manifest.json")
}

pub fn checkpoint_path(dir: &Path) -> PathBuf {
    dir.join("checkpoint.grid")
}

/// Outcome of `run_simulate`.
pub struct SimulateOutputs {
    pub manifest: PathBuf,
    pub clipped_pulses: u32,
}

/// Render the K transient captures plus ground truth and the manifest.
pub fn run_simulate(cfg: &RunConfig) -> Result<SimulateOutputs> {
    let out = &cfg.output_dir;
    ensure_dir(out)?;
    ensure_dir(&out.join("transients"))?;
    ensure_dir(&out.join("truth"))?;
    copy_config(cfg, out)?;
    let (scene, rig, _) = load_scene(cfg)?;
    let pulse = cfg.simulation.pulse()?;
    let noise = NoiseModel {
        ambient_rate: cfg.simulation.ambient_rate,
        poisson_sampling: cfg.simulation.poisson_sampling,
        seed: cfg.seed,
    };
    let mut entries = Vec::new();
    let mut clipped_total = 0u32;
    let flags = vec![if cfg.simulation.poisson_sampling {
        "poisson".to_string()
    } else {
        "expected".to_string()
    }];
    for k in 0..rig.spot_count() {
        let sim = with_pool(cfg.threads, || {
            simulate_view(
                &scene,
                &rig,
                k,
                &pulse,
                &noise,
                cfg.simulation.n_t,
                cfg.simulation.t_res(),
                cfg.simulation.t_start(),
            )
        })??;
        clipped_total += sim.clipped_pulses;
        let t_path = transient_path(out, k as u32);
        let g_path = truth_path(out, k as u32);
        io::write_transient(&t_path, &sim.transient, &rig.camera, rig.laser_position, sim.truth.l, &flags)?;
        io::write_truth(&g_path, &sim.truth)?;
        entries.push(io::ManifestEntry {
            k: k as u32,
            transient: format!("transients/view_{k:03}.tr"),
            truth: format!("truth/view_{k:03}.gt"),
            l: sim.truth.l.to_array(),
            d1: sim.truth.d1,
        });
    }
    let manifest = io::DatasetManifest {
        camera: rig.camera.clone(),
        laser_position: rig.laser_position.to_array(),
        n_t: cfg.simulation.n_t,
        t_res: cfg.simulation.t_res(),
        t_start: cfg.simulation.t_start(),
        pulse_fwhm: cfg.simulation.pulse_fwhm_ps * 1e-12,
        pulse_amplitude: cfg.simulation.pulse_amplitude,
        ambient_rate: cfg.simulation.ambient_rate,
        poisson_sampling: cfg.simulation.poisson_sampling,
        seed: cfg.seed,
        views: entries,
    };
    let m_path = manifest_path(out);
    io::write_manifest(&m_path, &manifest)?;
    Ok(SimulateOutputs { manifest: m_path, clipped_pulses: clipped_total })
}

/// Extract arrival times, confidences, and shadow masks for every capture.
pub fn run_preprocess(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let out = &cfg.output_dir;
    let manifest = io::read_manifest(&manifest_path(out))?;
    ensure_dir(&out.join("preprocessed"))?;
    copy_config(cfg, out)?;
    let pulse = PulseModel::new(manifest.pulse_fwhm, manifest.pulse_amplitude)?;
    let angle = cfg.preprocess.one_bounce_angle_deg.to_radians();
    let mut paths = Vec::new();
    for entry in &manifest.views {
        let t = io::read_transient(&out.join(&entry.transient))?;
        let (l, d1) = match cfg.preprocess.spot_source {
            SpotSource::Manifest => (Vec3::from_array(entry.l), entry.d1),
            SpotSource::Estimate => {
                let template = PulseTemplate::from_pulse(&pulse, t.image.t_res);
                let rig = LidarRig::from_calibration(
                    t.camera.clone(),
                    t.laser_position,
                    vec![Vec3::from_array(entry.l)],
                )?;
                with_pool(cfg.threads, || estimate_d1(&t.image, &rig, &template))??
            }
        };
        let view = with_pool(cfg.threads, || {
            preprocess_view(
                &t.image,
                &t.camera,
                l,
                d1,
                &pulse,
                cfg.preprocess.shadow_threshold,
                angle,
            )
        })??;
        let p = preprocessed_path(out, entry.k);
        io::write_preprocessed(&p, &view)?;
        paths.push(p);
    }
    Ok(paths)
}

fn load_views(cfg: &RunConfig, manifest: &io::DatasetManifest) -> Result<Vec<PreprocessedView>> {
    manifest
        .views
        .iter()
        .map(|e| io::read_preprocessed(&preprocessed_path(&cfg.output_dir, e.k)))
        .collect()
}

/// Rig whose camera matches the dataset (handles spatially downsampled
/// datasets whose spots were resolved at the original resolution).
fn rig_for_dataset(cfg: &RunConfig, manifest: &io::DatasetManifest) -> Result<(Scene, LidarRig)> {
    let (scene, rig, _) = load_scene(cfg)?;
    let rig = if rig.camera.nu != manifest.camera.nu || rig.camera.nv != manifest.camera.nv {
        rig.with_camera(manifest.camera.clone())
    } else {
        rig
    };
    Ok((scene, rig))
}

/// Train the density grid on the preprocessed dataset.
pub fn run_train(cfg: &RunConfig) -> Result<PathBuf> {
    let out = &cfg.output_dir;
    let manifest = io::read_manifest(&manifest_path(out))?;
    copy_config(cfg, out)?;
    let (scene, rig) = rig_for_dataset(cfg, &manifest)?;
    let views = load_views(cfg, &manifest)?;
    let dataset = build_dataset(&views, &rig)?;
    let mut grid = DensityGrid::new(cfg.train.grid_resolution, scene.bounds, cfg.train.init_sigma)?;
    let train_cfg = cfg.train.train_config(cfg.seed);
    let history = with_pool(cfg.threads, || {
        optimize(&mut grid, &dataset, &train_cfg, |row| {
            if row.iter % 1000 == 0 {
                println!(
                    "train iter {:>6}: primary {:.5} ns^2, shadow {:.5}, lr {:.2e}",
                    row.iter, row.l_primary, row.l_secondary, row.lr
                );
            }
        })
    })??;
    let ckpt = checkpoint_path(out);
    io::write_grid(&ckpt, &grid)?;
    io::write_loss_csv(&out.join("loss_history.csv"), &history)?;
    Ok(ckpt)
}

/// Per-view depth metrics.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DepthMetrics {
    pub l1: f64,
    pub psnr: f64,
}

/// Metrics emitted by `run_eval`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Metrics {
    pub train_view: DepthMetrics,
    pub test_view_count: usize,
    pub test_l1_mean: Option<f64>,
    pub test_psnr_mean: Option<f64>,
    pub chamfer: f64,
    pub iou_scene: f64,
    pub iou_region: Option<f64>,
}

/// Evaluate a checkpoint: depth metrics on the train view and a test sweep,
/// Chamfer distance of the extracted surface, and occupancy IoU.
pub fn run_eval(cfg: &RunConfig) -> Result<Metrics> {
    let out = &cfg.output_dir;
    let manifest = io::read_manifest(&manifest_path(out))?;
    copy_config(cfg, out)?;
    let (scene, rig) = rig_for_dataset(cfg, &manifest)?;
    let grid = io::read_grid(&checkpoint_path(out))?;
    let sampling = cfg.train.sampling();
    let eval_dir = out.join("eval");
    ensure_dir(&eval_dir)?;

    let metrics = with_pool(cfg.threads, || -> Result<Metrics> {
        // Train view.
        let cam = &rig.camera;
        let pred = render_depth_view(&grid, cam, &sampling);
        let truth = scene_depth_image(&scene, cam);
        let include = behind_object_mask(&scene, &rig, cam);
        let l1 = l1_depth(&pred, &truth, Some(&include))?;
        let peak = truth.depth_range().max(1e-6);
        let psnr = psnr_depth(&pred, &truth, Some(&include), peak)?;
        io::write_depth_raster(&eval_dir.join("depth_train.f32"), &pred)?;
        io::write_depth_png(&eval_dir.join("depth_train.png"), &pred)?;
        io::write_depth_raster(&eval_dir.join("depth_train_truth.f32"), &truth)?;
        io::write_depth_png(&eval_dir.join("depth_train_truth.png"), &truth)?;

        // Test sweep.
        let poses = match &cfg.eval.poses {
            Some(p) => io::read_poses(p)?,
            None => orbit_poses(
                Vec3::from_array(cfg.eval.orbit_center),
                cfg.eval.orbit_radius,
                cfg.eval.orbit_height,
                cfg.eval.orbit_views,
                cam.fov,
                cam.nu,
                cam.nv,
            )?,
        };
        let mut test_l1 = Vec::new();
        let mut test_psnr = Vec::new();
        for (i, pose) in poses.iter().enumerate() {
            let p = render_depth_view(&grid, pose, &sampling);
            let t = scene_depth_image(&scene, pose);
            let inc = behind_object_mask(&scene, &rig, pose);
            if let Ok(v) = l1_depth(&p, &t, Some(&inc)) {
                test_l1.push(v);
                let peak_t = t.depth_range().max(1e-6);
                test_psnr.push(psnr_depth(&p, &t, Some(&inc), peak_t)?);
            }
            io::write_depth_raster(&eval_dir.join(format!("depth_test_{i:03}.f32")), &p)?;
            io::write_depth_png(&eval_dir.join(format!("depth_test_{i:03}.png")), &p)?;
        }
        if !poses.is_empty() {
            io::write_poses(&eval_dir.join("poses.json"), &poses)?;
        }

        // Surface cloud vs scene cloud.
        let mesh = extract_mesh(&grid, cfg.eval.mesh_isolevel)?;
        let pred_cloud = PointCloud(mesh.sample_surface(cfg.eval.chamfer_points, cfg.seed));
        let truth_cloud = scene_point_cloud(&scene, cfg.eval.chamfer_points, cfg.seed);
        let chamfer_m = if pred_cloud.is_empty() {
            f64::INFINITY
        } else {
            chamfer(&pred_cloud, &truth_cloud)?
        };

        // Occupancy.
        let occ_pred = extract_occupancy(
            &grid,
            cfg.eval.occupancy_resolution,
            scene.bounds,
            cfg.eval.sigma_threshold,
        )?;
        let occ_truth = scene_occupancy(&scene, cfg.eval.occupancy_resolution, scene.bounds);
        let iou_scene = occupancy_iou(&occ_pred, &occ_truth, None)?;
        let iou_region = match (cfg.eval.region_min, cfg.eval.region_max) {
            (Some(lo), Some(hi)) => {
                let region = region_from_bounds(
                    &occ_pred,
                    Aabb::new(Vec3::from_array(lo), Vec3::from_array(hi)),
                );
                Some(occupancy_iou(&occ_pred, &occ_truth, Some(&region))?)
            }
            _ => None,
        };

        Ok(Metrics {
            train_view: DepthMetrics { l1, psnr },
            test_view_count: test_l1.len(),
            test_l1_mean: mean(&test_l1),
            test_psnr_mean: mean(&test_psnr),
            chamfer: chamfer_m,
            iou_scene,
            iou_region,
        })
    })??;

    std::fs::write(
        eval_dir.join("metrics.json"),
        serde_json::to_string_pretty(&metrics).map_err(|e| Error::Data(e.to_string()))?,
    )?;
    std::fs::write(eval_dir.join("metrics.csv"), metrics_csv(&metrics))?;
    Ok(metrics)
}

fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

fn metrics_csv(m: &Metrics) -> String {
    let mut s = String::from("train_l1,train_psnr,test_l1_mean,test_psnr_mean,test_views,chamfer,iou_scene,iou_region\n");
    s.push_str(&format!(
        "{},{},{},{},{},{},{},{}\n",
        m.train_view.l1,
        m.train_view.psnr,
        m.test_l1_mean.map_or(String::new(), |v| v.to_string()),
        m.test_psnr_mean.map_or(String::new(), |v| v.to_string()),
        m.test_view_count,
        m.chamfer,
        m.iou_scene,
        m.iou_region.map_or(String::new(), |v| v.to_string()),
    ));
    s
}

/// Extract and write the isosurface mesh of a trained checkpoint.
pub fn run_mesh(cfg: &RunConfig, isolevel: Option<f64>) -> Result<(PathBuf, PathBuf)> {
    let out = &cfg.output_dir;
    let grid = io::read_grid(&checkpoint_path(out))?;
    copy_config(cfg, out)?;
    let level = isolevel.unwrap_or(cfg.eval.mesh_isolevel);
    let mesh = with_pool(cfg.threads, || extract_mesh(&grid, level))??;
    let ply = out.join("mesh.ply");
    let stl = out.join("mesh.stl");
    mesh.write_ply(&ply)?;
    mesh.write_stl(&stl)?;
    Ok((ply, stl))
}

/// Ablation axes driven by `run_ablate`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationAxis {
    /// Sensor resolution (value = target pixels per side).
    Spatial,
    /// Bin width in ps (value must be a multiple of the base bin width).
    Temporal,
    /// Ambient photon rate per bin (value), with Poisson sampling.
    Ambient,
    /// Albedo scale on every primitive.
    Albedo,
    /// Number of illumination spots (prefix of the plan).
    IllumPoints,
    /// Shadow confidence threshold tau.
    ShadowThreshold,
}

impl AblationAxis {
    pub fn parse(s: &str) -> Result<AblationAxis> {
        match s {
            "spatial" => Ok(AblationAxis::Spatial),
            "temporal" => Ok(AblationAxis::Temporal),
            "ambient" => Ok(AblationAxis::Ambient),
            "albedo" => Ok(AblationAxis::Albedo),
            "illum_points" => Ok(AblationAxis::IllumPoints),
            "shadow_threshold" => Ok(AblationAxis::ShadowThreshold),
            other => Err(Error::Config(format!(
                "unknown ablation axis '{other}' (spatial, temporal, ambient, albedo, illum_points, shadow_threshold)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AblationAxis::Spatial => "spatial",
            AblationAxis::Temporal => "temporal",
            AblationAxis::Ambient => "ambient",
            AblationAxis::Albedo => "albedo",
            AblationAxis::IllumPoints => "illum_points",
            AblationAxis::ShadowThreshold => "shadow_threshold",
        }
    }
}

/// One row of the sweep table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub l1: f64,
    pub psnr: f64,
    pub chamfer: f64,
    pub iou: f64,
}

/// Run the pipeline once per value along an ablation axis. The base dataset
/// under the config's output directory is reused where the axis permits
/// (temporal/spatial integrate or subset the base captures; ambient and
/// albedo re-simulate).
pub fn run_ablate(cfg: &RunConfig, axis: AblationAxis, values: &[f64]) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Config("ablation needs at least one value".into()));
    }
    if !manifest_path(&cfg.output_dir).exists() {
        run_simulate(cfg)?;
    }
    let base_manifest = io::read_manifest(&manifest_path(&cfg.output_dir))?;
    let mut rows = Vec::new();
    for &value in values {
        let sub_dir = cfg
            .output_dir
            .join(format!("ablate_{}", axis.name()))
            .join(format!("{value}"));
        ensure_dir(&sub_dir)?;
        let mut sub_cfg = cfg.clone();
        sub_cfg.output_dir = sub_dir.clone();

        match axis {
            AblationAxis::Temporal => {
                let factor = (value / cfg.simulation.t_res_ps).round() as u32;
                if factor == 0 || (value / cfg.simulation.t_res_ps).fract().abs() > 1e-9 {
                    return Err(Error::Config(format!(
                        "temporal value {value} ps is not a multiple of the base {} ps",
                        cfg.simulation.t_res_ps
                    )));
                }
                sub_cfg.simulation.t_res_ps = value;
                sub_cfg.simulation.n_t = cfg.simulation.n_t / factor;
                derive_dataset(cfg, &sub_cfg, &base_manifest, |img| downsample_temporal(img, factor))?;
            }
            AblationAxis::Spatial => {
                let target = value as u32;
                if target == 0 || base_manifest.camera.nu % target != 0 {
                    return Err(Error::Config(format!(
                        "spatial value {value} does not divide the base resolution {}",
                        base_manifest.camera.nu
                    )));
                }
                let factor = base_manifest.camera.nu / target;
                derive_dataset(cfg, &sub_cfg, &base_manifest, |img| downsample_spatial(img, factor))?;
            }
            AblationAxis::Ambient => {
                sub_cfg.simulation.ambient_rate = value;
                sub_cfg.simulation.poisson_sampling = true;
                run_simulate(&sub_cfg)?;
            }
            AblationAxis::Albedo => {
                let scene_text = std::fs::read_to_string(&cfg.scene)?;
                let mut scene_file = SceneFile::from_json(&scene_text)?;
                for p in scene_file.primitives.iter_mut() {
                    p.albedo = (p.albedo * value).clamp(0.0, 1.0);
                }
                let scaled_scene = sub_dir.join("scene.json");
                std::fs::write(&scaled_scene, scene_file.to_json())?;
                sub_cfg.scene = scaled_scene;
                run_simulate(&sub_cfg)?;
            }
            AblationAxis::IllumPoints => {
                let count = value as usize;
                if count == 0 || count > base_manifest.views.len() {
                    return Err(Error::Config(format!(
                        "illumination count {value} outside 1..={}",
                        base_manifest.views.len()
                    )));
                }
                derive_dataset_subset(cfg, &sub_cfg, &base_manifest, count)?;
            }
            AblationAxis::ShadowThreshold => {
                sub_cfg.preprocess.shadow_threshold = value;
                derive_dataset_subset(cfg, &sub_cfg, &base_manifest, base_manifest.views.len())?;
            }
        }

        run_preprocess(&sub_cfg)?;
        run_train(&sub_cfg)?;
        let metrics = run_eval(&sub_cfg)?;
        rows.push(SweepRow {
            value,
            l1: metrics.train_view.l1,
            psnr: metrics.train_view.psnr,
            chamfer: metrics.chamfer,
            iou: metrics.iou_region.unwrap_or(metrics.iou_scene),
        });
    }

    let sweep_dir = cfg.output_dir.join(format!("ablate_{}", axis.name()));
    let mut csv = String::from("value,l1,psnr,chamfer,iou\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{},{},{}\n", r.value, r.l1, r.psnr, r.chamfer, r.iou));
    }
    std::fs::write(sweep_dir.join("sweep.csv"), csv)?;
    std::fs::write(
        sweep_dir.join("sweep.json"),
        serde_json::to_string_pretty(&rows).map_err(|e| Error::Data(e.to_string()))?,
    )?;
    Ok(rows)
}

/// Derive a transformed dataset from the base captures (temporal or spatial
/// integration) and write it under the sub-config's output directory.
fn derive_dataset(
    base: &RunConfig,
    sub: &RunConfig,
    base_manifest: &io::DatasetManifest,
    transform: impl Fn(&crate::transient::TransientImage) -> Result<crate::transient::TransientImage>,
) -> Result<()> {
    ensure_dir(&sub.output_dir.join("transients"))?;
    ensure_dir(&sub.output_dir.join("truth"))?;
    copy_config(sub, &sub.output_dir)?;
    let mut manifest = base_manifest.clone();
    let mut camera = base_manifest.camera.clone();
    for entry in &base_manifest.views {
        let t = io::read_transient(&base.output_dir.join(&entry.transient))?;
        let derived = transform(&t.image)?;
        if derived.nu != camera.nu {
            camera = t.camera.downsampled(t.image.nu / derived.nu)?;
        }
        manifest.n_t = derived.nt;
        manifest.t_res = derived.t_res;
        io::write_transient(
            &sub.output_dir.join(&entry.transient),
            &derived,
            &camera,
            t.laser_position,
            t.l,
            &t.flags,
        )?;
        // Truth rasters only carry over unchanged for temporal integration.
        if derived.nu == t.image.nu {
            std::fs::copy(
                base.output_dir.join(&entry.truth),
                sub.output_dir.join(&entry.truth),
            )?;
        } else {
            let truth = io::read_truth(&base.output_dir.join(&entry.truth))?;
            let down = downsample_truth(&truth, t.image.nu / derived.nu)?;
            io::write_truth(&sub.output_dir.join(&entry.truth), &down)?;
        }
    }
    manifest.camera = camera;
    io::write_manifest(&manifest_path(&sub.output_dir), &manifest)?;
    Ok(())
}

/// Block-reduce ground truth to a coarser pixel grid: depth averages over
/// valid pixels, masks vote by majority presence.
fn downsample_truth(truth: &crate::transient::ViewTruth, factor: u32) -> Result<crate::transient::ViewTruth> {
    if factor == 0 || truth.nu % factor != 0 || truth.nv % factor != 0 {
        return Err(Error::Argument("truth downsample factor must divide the resolution".into()));
    }
    let nu = truth.nu / factor;
    let nv = truth.nv / factor;
    let n = (nu * nv) as usize;
    let mut out = crate::transient::ViewTruth {
        k: truth.k,
        nu,
        nv,
        l: truth.l,
        d1: truth.d1,
        t_one_bounce: truth.t_one_bounce,
        depth: vec![f64::NAN; n],
        visible: vec![false; n],
        observed: vec![false; n],
        direct: vec![false; n],
    };
    let f = factor as usize;
    for u in 0..nu as usize {
        for v in 0..nv as usize {
            let mut depth_sum = 0.0;
            let mut depth_n = 0usize;
            let mut vis = 0usize;
            let mut obs = 0usize;
            let mut dir = false;
            for du in 0..f {
                for dv in 0..f {
                    let src = (u * f + du) * truth.nv as usize + (v * f + dv);
                    if truth.depth[src].is_finite() {
                        depth_sum += truth.depth[src];
                        depth_n += 1;
                    }
                    vis += truth.visible[src] as usize;
                    obs += truth.observed[src] as usize;
                    dir |= truth.direct[src];
                }
            }
            let dst = u * nv as usize + v;
            if depth_n > 0 {
                out.depth[dst] = depth_sum / depth_n as f64;
            }
            out.visible[dst] = vis * 2 > f * f;
            out.observed[dst] = obs * 2 > f * f;
            out.direct[dst] = dir;
        }
    }
    Ok(out)
}

/// Copy the first `count` captures of the base dataset.
fn derive_dataset_subset(
    base: &RunConfig,
    sub: &RunConfig,
    base_manifest: &io::DatasetManifest,
    count: usize,
) -> Result<()> {
    ensure_dir(&sub.output_dir.join("transients"))?;
    ensure_dir(&sub.output_dir.join("truth"))?;
    copy_config(sub, &sub.output_dir)?;
    let mut manifest = base_manifest.clone();
    manifest.views.truncate(count);
    for entry in &manifest.views {
        std::fs::copy(base.output_dir.join(&entry.transient), sub.output_dir.join(&entry.transient))?;
        std::fs::copy(base.output_dir.join(&entry.truth), sub.output_dir.join(&entry.truth))?;
    }
    io::write_manifest(&manifest_path(&sub.output_dir), &manifest)?;
    Ok(())
}
