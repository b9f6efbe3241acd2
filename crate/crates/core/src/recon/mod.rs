//! Reconstruction: builds training samples from preprocessed views and
//! optimizes the density grid against the arrival-time and shadow targets.
//!
//! Per sample the primary ray renders an expected depth d3; the implied
//! surface point connects to the active spot for the secondary
//! (transmittance) render. Lit pixels supervise the round-trip time in
//! nanoseconds, every pixel supervises the shadow probability, and the
//! secondary gradient flows both through the densities along the segment
//! and through the segment geometry itself (the surface point moves with
//! the rendered depth).

pub mod adam;
pub mod mesh;

pub use mesh::{extract_mesh, TriangleMesh};

use crate::eval::DepthImage;
use crate::field::{
    backward_depth, backward_transmittance, render_depth, render_transmittance, DensityGrid,
    SamplingConfig,
};
use crate::math::{Ray, Vec3};
use crate::rng::StreamRng;
use crate::scene::{CameraModel, LidarRig};
use crate::signal::PreprocessedView;
use crate::transient::SPEED_OF_LIGHT;
use crate::{Error, Result};
use adam::Adam;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Secondary rays during training sample this many coarse strata.
pub const SECONDARY_COARSE_SAMPLES: usize = 12;

/// Supervision carried by one pixel/illumination pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SampleTarget {
    /// Two-bounce pulse observed: arrival time in seconds, shadow value 1.
    Lit { t_peak: f64 },
    /// No pulse observed: shadow value 0.
    Shadow,
}

/// One training sample: a pixel ray paired with an illumination spot.
#[derive(Clone, Copy, Debug)]
pub struct TrainingSample {
    pub origin: Vec3,
    pub dir: Vec3,
    pub l: Vec3,
    pub d1: f64,
    pub k: u32,
    pub target: SampleTarget,
}

impl TrainingSample {
    pub fn shadow_value(&self) -> f64 {
        match self.target {
            SampleTarget::Lit { .. } => 1.0,
            SampleTarget::Shadow => 0.0,
        }
    }
}

/// Training schedule and optimizer settings.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    /// Iterations with the shadow loss disabled (beta = 0).
    pub warmup_iters: usize,
    /// Shadow-loss weight after warmup.
    pub beta: f64,
    /// Rays per optimization step.
    pub batch_size: usize,
    /// Initial learning rate; decays exponentially to `lr_final`.
    pub lr: f64,
    pub lr_final: f64,
    pub sampling: SamplingConfig,
    pub seed: u64,
    /// Ordered gradient reduction: results are bit-identical across runs
    /// and thread counts. Off trades that for an unordered (slightly
    /// faster) merge; batch order is seeded either way.
    pub deterministic: bool,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.batch_size == 0 {
            return Err(Error::Argument("iterations and batch size must be positive".into()));
        }
        if self.warmup_iters >= self.iterations {
            return Err(Error::Argument(format!(
                "warmup {} must be below iterations {}",
                self.warmup_iters, self.iterations
            )));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::Argument("beta must be >= 0".into()));
        }
        if !(self.lr > 0.0 && self.lr_final > 0.0) {
            return Err(Error::Argument("learning rates must be > 0".into()));
        }
        self.sampling.validate()
    }

    /// Learning rate at an iteration (exponential decay to `lr_final`).
    pub fn lr_at(&self, iter: usize) -> f64 {
        if self.iterations <= 1 {
            return self.lr;
        }
        let frac = iter as f64 / (self.iterations - 1) as f64;
        self.lr * (self.lr_final / self.lr).powf(frac)
    }

    pub fn beta_at(&self, iter: usize) -> f64 {
        if iter < self.warmup_iters {
            0.0
        } else {
            self.beta
        }
    }
}

/// Loss values of one batch.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_primary: f64,
    pub l_secondary: f64,
    /// l_primary + beta * l_secondary.
    pub total: f64,
    pub lit_count: usize,
    pub shadow_count: usize,
}

/// Flatten preprocessed views into training samples.
///
/// Lit pixels yield a combined time/shadow sample, shadowed pixels a
/// shadow-only sample, and one-bounce-filtered pixels are dropped entirely.
pub fn build_dataset(views: &[PreprocessedView], rig: &LidarRig) -> Result<Vec<TrainingSample>> {
    if views.is_empty() {
        return Err(Error::Argument("no views to train on".into()));
    }
    let cam = &rig.camera;
    let mut out = Vec::new();
    for view in views {
        if view.nu != cam.nu || view.nv != cam.nv {
            return Err(Error::Data(format!(
                "view {} resolution {}x{} does not match the rig camera {}x{}",
                view.k, view.nu, view.nv, cam.nu, cam.nv
            )));
        }
        if view.k as usize >= rig.spot_count() {
            return Err(Error::Data(format!(
                "view index {} outside the rig's {} spots",
                view.k,
                rig.spot_count()
            )));
        }
        for u in 0..cam.nu {
            for v in 0..cam.nv {
                let idx = (u * cam.nv + v) as usize;
                if view.excluded[idx] {
                    continue;
                }
                let target = if view.lit[idx] {
                    let t = view.tof[idx];
                    if !t.is_finite() {
                        return Err(Error::Data(format!(
                            "lit pixel ({u}, {v}) of view {} has no arrival time",
                            view.k
                        )));
                    }
                    SampleTarget::Lit { t_peak: t }
                } else {
                    SampleTarget::Shadow
                };
                let ray = cam.pixel_ray(u, v)?;
                out.push(TrainingSample {
                    origin: ray.origin,
                    dir: ray.dir,
                    l: view.l,
                    d1: view.d1,
                    k: view.k,
                    target,
                });
            }
        }
    }
    Ok(out)
}

struct ChunkResult {
    lit_sq_sum: f64,
    shadow_sq_sum: f64,
    grad: Vec<(usize, f64)>,
}

/// Loss + gradients over a batch. Chunks run in parallel. With `ordered`
/// set, the gradient reduction folds chunks in index order so results do
/// not depend on thread count; otherwise chunks merge as they finish
/// (faster, nondeterministic in the last bits).
fn loss_pass(
    grid: &DensityGrid,
    batch: &[TrainingSample],
    beta: f64,
    sampling: &SamplingConfig,
    seed: u64,
    iter: u64,
    with_secondary: bool,
    ordered: bool,
    grad_out: Option<&mut [f64]>,
) -> LossBreakdown {
    let lit_count = batch
        .iter()
        .filter(|s| matches!(s.target, SampleTarget::Lit { .. }))
        .count();
    let all_count = batch.len();
    let want_grad = grad_out.is_some();

    const CHUNK: usize = 64;
    let chunk_results = batch
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(chunk_idx, samples)| {
            let mut res = ChunkResult { lit_sq_sum: 0.0, shadow_sq_sum: 0.0, grad: Vec::new() };
            for (j, sample) in samples.iter().enumerate() {
                let sample_idx = (chunk_idx * CHUNK + j) as u64;
                let mut upstream_depth = 0.0f64;

                let mut rng = sampling
                    .stratified
                    .then(|| StreamRng::from_key(&[seed, iter, sample_idx, 0x70]));
                let ray = Ray::new(sample.origin, sample.dir);
                let dr = render_depth(grid, &ray, sampling, rng.as_mut());
                let d_hat = dr.depth;
                let x_p = sample.origin + sample.dir * d_hat;

                if let SampleTarget::Lit { t_peak } = sample.target {
                    let d2_hat = sample.l.distance(x_p);
                    let t_hat = (sample.d1 + d2_hat + d_hat) / SPEED_OF_LIGHT;
                    let err_ns = (t_peak - t_hat) * 1e9;
                    res.lit_sq_sum += err_ns * err_ns;
                    if want_grad && lit_count > 0 {
                        // dL/dt_hat_ns = -2 err / n_lit; t_hat_ns = 1e9 (d1 + d2 + d3)/c.
                        let dl_dt = -2.0 * err_ns / lit_count as f64;
                        let dd2_dd3 = if d2_hat > 1e-9 {
                            -((sample.l - x_p) / d2_hat).dot(sample.dir)
                        } else {
                            0.0
                        };
                        upstream_depth += dl_dt * (1e9 / SPEED_OF_LIGHT) * (1.0 + dd2_dd3);
                    }
                }

                if with_secondary {
                    // Coarse-only secondary sampling: occlusion needs
                    // blocked-or-not, not sub-sample depth precision. The
                    // reduced count also widens the 2-delta endpoint standoff
                    // (delta = d2/count) enough to clear the finite-thickness
                    // density skin of the trained surfaces at oblique exits.
                    let sec_sampling = SamplingConfig {
                        coarse: SECONDARY_COARSE_SAMPLES.min(sampling.coarse),
                        fine: 0,
                        ..*sampling
                    };
                    let mut sec_rng = sampling
                        .stratified
                        .then(|| StreamRng::from_key(&[seed, iter, sample_idx, 0x71]));
                    match render_transmittance(grid, x_p, sample.l, &sec_sampling, sec_rng.as_mut()) {
                        Ok(tr) => {
                            let s = sample.shadow_value();
                            let f = s - tr.p;
                            res.shadow_sq_sum += f * f;
                            if want_grad && beta > 0.0 {
                                let dl_dp = -2.0 * f / all_count as f64;
                                backward_transmittance(&tr, beta * dl_dp, &mut res.grad);
                                // The segment origin moves with the rendered depth.
                                let dp_dd3 = tr.dp_dfrom.dot(sample.dir);
                                upstream_depth += beta * dl_dp * dp_dd3;
                            }
                        }
                        Err(_) => {
                            // Degenerate segment (surface point at the spot):
                            // nothing blocks it, no gradient.
                            let s = sample.shadow_value();
                            res.shadow_sq_sum += (s - 1.0) * (s - 1.0);
                        }
                    }
                }

                if want_grad && upstream_depth != 0.0 {
                    backward_depth(&dr.cache, upstream_depth, &mut res.grad);
                }
            }
            res
        });

    let mut lit_sq = 0.0;
    let mut shadow_sq = 0.0;
    if ordered {
        let chunks: Vec<ChunkResult> = chunk_results.collect();
        if let Some(grad) = grad_out {
            for c in &chunks {
                for &(idx, g) in &c.grad {
                    grad[idx] += g;
                }
            }
        }
        for c in &chunks {
            lit_sq += c.lit_sq_sum;
            shadow_sq += c.shadow_sq_sum;
        }
    } else {
        // Unordered merge: per-worker dense buffers summed as chunks finish.
        let n_params = grid.param_count();
        let (dense, lit, shadow) = chunk_results
            .fold(
                || (vec![0.0f64; n_params], 0.0f64, 0.0f64),
                |(mut dense, lit, shadow), c| {
                    for &(idx, g) in &c.grad {
                        dense[idx] += g;
                    }
                    (dense, lit + c.lit_sq_sum, shadow + c.shadow_sq_sum)
                },
            )
            .reduce(
                || (vec![0.0f64; n_params], 0.0f64, 0.0f64),
                |(mut a, la, sa), (b, lb, sb)| {
                    for (x, y) in a.iter_mut().zip(b.iter()) {
                        *x += y;
                    }
                    (a, la + lb, sa + sb)
                },
            );
        if let Some(grad) = grad_out {
            for (g, d) in grad.iter_mut().zip(dense.iter()) {
                *g += d;
            }
        }
        lit_sq = lit;
        shadow_sq = shadow;
    }

    let l_primary = if lit_count > 0 { lit_sq / lit_count as f64 } else { 0.0 };
    let l_secondary = if with_secondary && all_count > 0 {
        shadow_sq / all_count as f64
    } else {
        0.0
    };
    LossBreakdown {
        l_primary,
        l_secondary,
        total: l_primary + beta * l_secondary,
        lit_count,
        shadow_count: all_count - lit_count,
    }
}

/// Loss and dense parameter gradient of one batch (secondary rays rendered
/// for every sample).
pub fn compute_loss(
    grid: &DensityGrid,
    batch: &[TrainingSample],
    beta: f64,
    sampling: &SamplingConfig,
) -> Result<(LossBreakdown, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Argument("empty batch".into()));
    }
    let mut grad = vec![0.0f64; grid.param_count()];
    let breakdown = loss_pass(grid, batch, beta, sampling, 0, 0, true, true, Some(&mut grad));
    Ok((breakdown, grad))
}

/// One row of the training history (recorded every 100 iterations).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iter: usize,
    pub l_primary: f64,
    pub l_secondary: f64,
    pub total: f64,
    pub lr: f64,
}

/// Minibatch optimization of the grid against the dataset.
///
/// Aborts with a diagnostic on non-finite loss. With `deterministic` set the
/// batch order and gradient reduction are fixed, so the trained parameters
/// are bit-identical across runs and thread counts.
pub fn optimize(
    grid: &mut DensityGrid,
    dataset: &[TrainingSample],
    cfg: &TrainConfig,
    mut on_record: impl FnMut(&HistoryRow),
) -> Result<Vec<HistoryRow>> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Argument("empty dataset".into()));
    }
    let n = dataset.len();
    let mut order: Vec<u32> = (0..n as u32).collect();
    let mut epoch = 0u64;
    StreamRng::from_key(&[cfg.seed, 0xE0, epoch]).shuffle(&mut order);
    let mut cursor = 0usize;

    let mut adam = Adam::new(grid.param_count());
    let mut grad = vec![0.0f64; grid.param_count()];
    let mut batch: Vec<TrainingSample> = Vec::with_capacity(cfg.batch_size);
    let mut history = Vec::new();

    for iter in 0..cfg.iterations {
        batch.clear();
        for _ in 0..cfg.batch_size.min(n) {
            if cursor == n {
                cursor = 0;
                epoch += 1;
                StreamRng::from_key(&[cfg.seed, 0xE0, epoch]).shuffle(&mut order);
            }
            batch.push(dataset[order[cursor] as usize]);
            cursor += 1;
        }

        let beta = cfg.beta_at(iter);
        let record = iter % 100 == 0 || iter + 1 == cfg.iterations;
        let with_secondary = beta > 0.0 || record;
        grad.fill(0.0);
        let breakdown = loss_pass(
            grid,
            &batch,
            beta,
            &cfg.sampling,
            cfg.seed,
            iter as u64,
            with_secondary,
            cfg.deterministic,
            Some(&mut grad),
        );
        if !breakdown.total.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite loss at iteration {iter}: primary {} secondary {} (lit {} shadow {})",
                breakdown.l_primary, breakdown.l_secondary, breakdown.lit_count, breakdown.shadow_count
            )));
        }
        let lr = cfg.lr_at(iter);
        adam.step(grid.raw_mut(), &grad, lr);

        if record {
            let row = HistoryRow {
                iter,
                l_primary: breakdown.l_primary,
                l_secondary: breakdown.l_secondary,
                total: breakdown.total,
                lr,
            };
            on_record(&row);
            history.push(row);
        }
    }
    Ok(history)
}

/// Depth image of the current field from an arbitrary camera. Pixels whose
/// termination weight sum stays below 0.5 are marked invalid.
pub fn render_depth_view(grid: &DensityGrid, camera: &CameraModel, sampling: &SamplingConfig) -> DepthImage {
    let mut img = DepthImage::new(camera.nu, camera.nv);
    let results: Vec<(f64, f64)> = (0..camera.pixel_count())
        .into_par_iter()
        .map(|idx| {
            let u = (idx / camera.nv as usize) as u32;
            let v = (idx % camera.nv as usize) as u32;
            let ray = camera.pixel_ray(u, v).expect("pixel in range");
            let r = render_depth(grid, &ray, sampling, None);
            (r.depth, r.weight_sum)
        })
        .collect();
    for (i, (depth, wsum)) in results.into_iter().enumerate() {
        if wsum >= 0.5 {
            img.values[i] = depth;
            img.valid[i] = true;
        }
    }
    img
}
