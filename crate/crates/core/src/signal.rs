//! Extraction of per-pixel training inputs from raw transients.
//!
//! A template of the laser pulse is slid over each histogram; the
//! correlation argmax (with parabolic sub-bin refinement) gives the
//! two-bounce arrival time and the energy-normalized correlation maximum
//! gives a confidence in [0, 1] that a pulse is present. Thresholding the
//! confidence yields the shadow mask; the pixel imaging the spot is zeroed
//! out so its one-bounce return never leaks into training data.

use crate::math::Vec3;
use crate::scene::{CameraModel, LidarRig};
use crate::transient::{PulseModel, TransientImage, SPEED_OF_LIGHT};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Maximum laser/sensor separation for time-of-flight spot recovery.
pub const COLOCATION_TOL: f64 = 0.01;

/// Discretized pulse shape with unit energy (sum of squared taps = 1).
#[derive(Clone, Debug)]
pub struct PulseTemplate {
    /// Odd number of taps; tap `half_width` aligns with the tested bin.
    pub taps: Vec<f64>,
    pub half_width: usize,
    pub t_res: f64,
}

impl PulseTemplate {
    /// Discretize `pulse` at bin width `t_res`, centered on a bin center.
    pub fn from_pulse(pulse: &PulseModel, t_res: f64) -> PulseTemplate {
        let half = ((6.0 * pulse.sigma() / t_res).ceil() as usize).max(1);
        let mut taps = Vec::with_capacity(2 * half + 1);
        for i in -(half as i64)..=(half as i64) {
            let lo = (i as f64 - 0.5) * t_res;
            let hi = (i as f64 + 0.5) * t_res;
            taps.push(pulse.mass_between(0.0, lo, hi));
        }
        let energy: f64 = taps.iter().map(|t| t * t).sum();
        let scale = 1.0 / energy.sqrt();
        for t in taps.iter_mut() {
            *t *= scale;
        }
        PulseTemplate { taps, half_width: half, t_res }
    }
}

/// Result of matched filtering one histogram.
#[derive(Clone, Copy, Debug)]
pub struct PeakEstimate {
    /// Refined arrival time in seconds; NaN when no pulse was found.
    pub t_peak: f64,
    /// Energy-normalized correlation maximum in [0, 1].
    pub confidence: f64,
    /// Raw correlation maximum (scales with pulse energy).
    pub raw_peak: f64,
    /// Argmax bin.
    pub bin: usize,
}

const NO_PEAK: PeakEstimate = PeakEstimate { t_peak: f64::NAN, confidence: 0.0, raw_peak: 0.0, bin: 0 };

/// Cross-correlate one histogram with the pulse template.
///
/// The arrival time is the correlation argmax refined by a parabola through
/// the three surrounding lags. Confidence is the correlation maximum divided
/// by the local histogram energy, so a clean pulse of any amplitude scores
/// ~1 and an all-zero histogram scores 0.
pub fn cross_correlate(hist: &[f32], template: &PulseTemplate, t_start: f64) -> PeakEstimate {
    let nt = hist.len();
    if nt == 0 || hist.iter().all(|&x| x == 0.0) {
        return NO_PEAK;
    }
    let half = template.half_width as i64;
    let mut best_corr = f64::NEG_INFINITY;
    let mut best_bin = 0usize;
    let mut corr_prev_best = 0.0;
    let mut corr_next_best = 0.0;
    let corr_at = |s: i64| -> f64 {
        let mut acc = 0.0;
        for i in -half..=half {
            let b = s + i;
            if b >= 0 && (b as usize) < nt {
                acc += hist[b as usize] as f64 * template.taps[(i + half) as usize];
            }
        }
        acc
    };
    let mut prev = corr_at(-1);
    let mut cur = corr_at(0);
    for s in 0..nt as i64 {
        let next = corr_at(s + 1);
        if cur > best_corr {
            best_corr = cur;
            best_bin = s as usize;
            corr_prev_best = prev;
            corr_next_best = next;
        }
        prev = cur;
        cur = next;
    }
    if best_corr <= 0.0 {
        return NO_PEAK;
    }
    // Parabolic refinement over the three lags around the argmax.
    let denom = corr_prev_best - 2.0 * best_corr + corr_next_best;
    let frac = if denom.abs() > 1e-300 {
        (0.5 * (corr_prev_best - corr_next_best) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    // Local energy over the template support (template has unit energy).
    let lo = (best_bin as i64 - half).max(0) as usize;
    let hi = ((best_bin as i64 + half) as usize).min(nt - 1);
    let local_energy: f64 = hist[lo..=hi].iter().map(|&x| (x as f64) * (x as f64)).sum();
    let confidence = if local_energy > 0.0 {
        (best_corr / local_energy.sqrt()).clamp(0.0, 1.0)
    } else {
        0.0
    };
    PeakEstimate {
        t_peak: t_start + (best_bin as f64 + frac + 0.5) * template.t_res,
        confidence,
        raw_peak: best_corr,
        bin: best_bin,
    }
}

/// Zero every pixel whose viewing ray lies within `angle_thresh` radians of
/// the sensor-to-spot direction. Returns the filtered image and the mask of
/// zeroed pixels.
pub fn filter_one_bounce(
    img: &TransientImage,
    camera: &CameraModel,
    l: Vec3,
    angle_thresh: f64,
) -> Result<(TransientImage, Vec<bool>)> {
    if camera.nu != img.nu || camera.nv != img.nv {
        return Err(Error::Data(format!(
            "camera {}x{} does not match transient {}x{}",
            camera.nu, camera.nv, img.nu, img.nv
        )));
    }
    let to_spot = (l - camera.position)
        .normalized()
        .ok_or_else(|| Error::Argument("spot coincides with the sensor".into()))?;
    let cos_thresh = angle_thresh.cos();
    let mut out = img.clone();
    let mut excluded = vec![false; camera.pixel_count()];
    let nt = img.nt as usize;
    for u in 0..img.nu {
        for v in 0..img.nv {
            let ray = camera.pixel_ray(u, v)?;
            if ray.dir.dot(to_spot) >= cos_thresh {
                let idx = (u * img.nv + v) as usize;
                excluded[idx] = true;
                out.data[idx * nt..(idx + 1) * nt].fill(0.0);
            }
        }
    }
    Ok((out, excluded))
}

/// Confidence threshold -> boolean mask, true = lit (two-bounce observed).
pub fn threshold_shadow(confidence: &[f64], tau: f64) -> Vec<bool> {
    confidence.iter().map(|&c| c >= tau).collect()
}

/// Locate the spot and its laser distance from the one-bounce return.
///
/// Requires a roughly colocated laser and sensor. Scans for the pixel with
/// the strongest raw correlation peak (the one-bounce return dominates every
/// two-bounce return), reads its arrival time t_1B, and places the spot at
/// distance c * t_1B / 2 along that pixel's ray.
pub fn estimate_d1(
    img: &TransientImage,
    rig: &LidarRig,
    template: &PulseTemplate,
) -> Result<(Vec3, f64)> {
    let cam = &rig.camera;
    let sep = cam.position.distance(rig.laser_position);
    if sep > COLOCATION_TOL {
        return Err(Error::Argument(format!(
            "laser/sensor separation {sep:.4} m exceeds {COLOCATION_TOL} m; take the spot position from the dataset manifest instead"
        )));
    }
    let npix = cam.pixel_count();
    let best = (0..npix)
        .into_par_iter()
        .map(|idx| {
            let u = (idx / cam.nv as usize) as u32;
            let v = (idx % cam.nv as usize) as u32;
            let est = cross_correlate(img.histogram(u, v), template, img.t_start);
            (est.raw_peak, idx, est.t_peak)
        })
        .reduce(
            || (f64::NEG_INFINITY, usize::MAX, f64::NAN),
            |a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a },
        );
    let (peak, idx, t_1b) = best;
    if !(peak > 0.0) || !t_1b.is_finite() {
        return Err(Error::Data("no one-bounce pulse found in the transient".into()));
    }
    let d1 = SPEED_OF_LIGHT * t_1b / 2.0;
    let u = (idx / cam.nv as usize) as u32;
    let v = (idx % cam.nv as usize) as u32;
    let ray = cam.pixel_ray(u, v)?;
    Ok((ray.at(d1), d1))
}

/// Signal-to-background analytics of time gating.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GatingReport {
    /// Total transient duration, seconds.
    pub t_total: f64,
    pub t1: f64,
    pub t2: f64,
    /// Gate width t2 - t1.
    pub window: f64,
    pub sbr_ungated: f64,
    pub sbr_gated: f64,
    /// sbr_gated / sbr_ungated; T/W when all signal energy lies in the gate.
    pub improvement: f64,
}

/// Discrete-sum signal-to-background ratios with and without a time gate
/// [t1, t2] against a constant noise level `noise`. Bins whose centers fall
/// inside the gate count as gated.
pub fn gating_report(hist: &[f32], t_res: f64, t_start: f64, t1: f64, t2: f64, noise: f64) -> Result<GatingReport> {
    if hist.is_empty() || !(t_res > 0.0) {
        return Err(Error::Argument("gating needs a non-empty histogram".into()));
    }
    let t_total = hist.len() as f64 * t_res;
    if !(t1 < t2) || t1 < t_start - 1e-15 || t2 > t_start + t_total + 1e-15 {
        return Err(Error::Argument(format!(
            "gate [{t1}, {t2}] outside transient [{t_start}, {}]",
            t_start + t_total
        )));
    }
    let window = t2 - t1;
    let mut energy_total = 0.0f64;
    let mut energy_gated = 0.0f64;
    for (b, &x) in hist.iter().enumerate() {
        let e = x as f64 * x as f64 * t_res;
        energy_total += e;
        let center = t_start + (b as f64 + 0.5) * t_res;
        if center >= t1 && center <= t2 {
            energy_gated += e;
        }
    }
    let (sbr_ungated, sbr_gated) = if noise == 0.0 {
        (f64::INFINITY, f64::INFINITY)
    } else {
        let n2 = noise * noise;
        (energy_total / (n2 * t_total), energy_gated / (n2 * window))
    };
    let improvement = if energy_total == 0.0 {
        1.0 // no signal anywhere, gating changes nothing
    } else if noise == 0.0 {
        // Constant-noise factor cancels; report the energy/width ratio.
        (energy_gated / window) / (energy_total / t_total)
    } else {
        sbr_gated / sbr_ungated
    };
    Ok(GatingReport { t_total, t1, t2, window, sbr_ungated, sbr_gated, improvement })
}

/// Per-illumination extraction results: everything training needs.
#[derive(Clone, Debug)]
pub struct PreprocessedView {
    pub nu: u32,
    pub nv: u32,
    pub k: u32,
    /// Spot position used for secondary rays.
    pub l: Vec3,
    /// Laser-to-spot distance, meters.
    pub d1: f64,
    /// Confidence threshold that produced `lit`.
    pub tau: f64,
    /// Refined arrival time per pixel, seconds; NaN where unlit/excluded.
    pub tof: Vec<f64>,
    /// Normalized correlation maximum per pixel.
    pub confidence: Vec<f64>,
    /// true = two-bounce observed (lit).
    pub lit: Vec<bool>,
    /// Pixels removed by the one-bounce filter; never used as samples.
    pub excluded: Vec<bool>,
}

impl PreprocessedView {
    pub fn pixel_count(&self) -> usize {
        self.nu as usize * self.nv as usize
    }
}

/// Full extraction for one view: one-bounce filter, matched filter,
/// confidence threshold.
pub fn preprocess_view(
    img: &TransientImage,
    camera: &CameraModel,
    l: Vec3,
    d1: f64,
    pulse: &PulseModel,
    tau: f64,
    one_bounce_angle: f64,
) -> Result<PreprocessedView> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Argument(format!("shadow threshold {tau} outside [0, 1]")));
    }
    let template = PulseTemplate::from_pulse(pulse, img.t_res);
    let (filtered, excluded) = filter_one_bounce(img, camera, l, one_bounce_angle)?;
    let npix = camera.pixel_count();
    let estimates: Vec<PeakEstimate> = (0..npix)
        .into_par_iter()
        .map(|idx| {
            let u = (idx / camera.nv as usize) as u32;
            let v = (idx % camera.nv as usize) as u32;
            cross_correlate(filtered.histogram(u, v), &template, filtered.t_start)
        })
        .collect();
    let confidence: Vec<f64> = estimates.iter().map(|e| e.confidence).collect();
    let lit = threshold_shadow(&confidence, tau);
    let tof = estimates
        .iter()
        .zip(lit.iter())
        .map(|(e, &is_lit)| if is_lit { e.t_peak } else { f64::NAN })
        .collect();
    Ok(PreprocessedView {
        nu: img.nu,
        nv: img.nv,
        k: img.k,
        l,
        d1,
        tau,
        tof,
        confidence,
        lit,
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Vec3;
    use crate::scene::{IlluminationPlan, Primitive, Scene, Shape};
    use crate::transient::{simulate_view, NoiseModel};

    const T_RES: f64 = 128e-12;

    fn template() -> (PulseModel, PulseTemplate) {
        let pulse = PulseModel::new(128e-12, 80.0).unwrap();
        let template = PulseTemplate::from_pulse(&pulse, T_RES);
        (pulse, template)
    }

    #[test]
    fn template_has_unit_energy() {
        let (_, t) = template();
        let e: f64 = t.taps.iter().map(|x| x * x).sum();
        assert!((e - 1.0).abs() < 1e-12);
        assert_eq!(t.taps.len(), 2 * t.half_width + 1);
    }

    #[test]
    fn clean_pulse_recovered_with_high_confidence() {
        let (pulse, tmpl) = template();
        let mut hist = vec![0.0f64; 391];
        // Pulse centered exactly on the center of bin 136.
        let center = (136.0 + 0.5) * T_RES;
        pulse.deposit(&mut hist, T_RES, 0.0, center, 2.5);
        let hist32: Vec<f32> = hist.iter().map(|&x| x as f32).collect();
        let est = cross_correlate(&hist32, &tmpl, 0.0);
        assert_eq!(est.bin, 136);
        assert!((est.t_peak - center).abs() < T_RES / 4.0, "t = {}", est.t_peak);
        assert!(est.confidence > 0.98, "confidence = {}", est.confidence);
    }

    #[test]
    fn all_zero_histogram_yields_sentinel() {
        let (_, tmpl) = template();
        let est = cross_correlate(&vec![0.0f32; 64], &tmpl, 0.0);
        assert!(est.t_peak.is_nan());
        assert_eq!(est.confidence, 0.0);
    }

    #[test]
    fn constant_ambient_offset_preserves_argmax() {
        let (pulse, tmpl) = template();
        let mut clean = vec![0.0f64; 200];
        let center = (57.0 + 0.5) * T_RES;
        pulse.deposit(&mut clean, T_RES, 0.0, center, 1.0);
        let pulse_energy: f64 = clean.iter().sum();
        // Uniform ambient with the same total energy as the pulse.
        let ambient = pulse_energy / 200.0;
        let noisy: Vec<f32> = clean.iter().map(|&x| (x + ambient) as f32).collect();
        let clean32: Vec<f32> = clean.iter().map(|&x| x as f32).collect();
        let a = cross_correlate(&clean32, &tmpl, 0.0);
        let b = cross_correlate(&noisy, &tmpl, 0.0);
        assert_eq!(a.bin, b.bin);
    }

    #[test]
    fn confidence_invariant_under_scaling() {
        let (pulse, tmpl) = template();
        let mut hist = vec![0.0f64; 128];
        pulse.deposit(&mut hist, T_RES, 0.0, 40.2 * T_RES, 1.0);
        for &scale in &[1e-6f32, 1.0, 1e6] {
            let scaled: Vec<f32> = hist.iter().map(|&x| x as f32 * scale).collect();
            let est = cross_correlate(&scaled, &tmpl, 0.0);
            let base = cross_correlate(&hist.iter().map(|&x| x as f32).collect::<Vec<_>>(), &tmpl, 0.0);
            assert_eq!(est.bin, base.bin);
            assert!((est.confidence - base.confidence).abs() < 1e-5);
        }
    }

    #[test]
    fn threshold_edges() {
        let conf = vec![0.0, 0.1, 0.5, 0.9, 1.0];
        assert!(threshold_shadow(&conf, 0.0).iter().all(|&m| m));
        assert!(threshold_shadow(&conf, 1.0 + 1e-9).iter().all(|&m| !m));
        let m = threshold_shadow(&conf, 0.5);
        assert_eq!(m, vec![false, false, true, true, true]);
    }

    /// Room fixture: back wall + side wall, wide fov so edge pixels see the
    /// side wall, spot aimed through a side-wall pixel.
    fn wall_rig() -> (Scene, LidarRig) {
        let scene = Scene::new(
            vec![
                Primitive {
                    shape: Shape::Box { min: Vec3::new(-3.0, -3.0, 2.0), max: Vec3::new(3.0, 3.0, 2.3) },
                    albedo: 0.9,
                },
                Primitive {
                    shape: Shape::Box { min: Vec3::new(-2.0, -3.0, -1.0), max: Vec3::new(-1.7, 3.0, 2.0) },
                    albedo: 0.8,
                },
            ],
            0.0,
        )
        .unwrap();
        let cam = crate::scene::CameraModel::look_at(
            Vec3::ZERO,
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(0.0, 1.0, 0.0),
            2.0,
            33,
            33,
        )
        .unwrap();
        // Spot through a known pixel so the one-bounce return exists exactly.
        let rig = LidarRig::resolve(cam, Vec3::new(0.004, 0.004, 0.0), &IlluminationPlan::Pixels(vec![[30, 16]]), &scene).unwrap();
        (scene, rig)
    }

    #[test]
    fn one_bounce_filter_zeroes_spot_pixel_only_nearby() {
        let (scene, rig) = wall_rig();
        let pulse = PulseModel::new(128e-12, 80.0).unwrap();
        let sim = simulate_view(&scene, &rig, 0, &pulse, &NoiseModel::noiseless(), 391, T_RES, 0.0).unwrap();
        let l = sim.truth.l;
        let (filtered, excluded) = filter_one_bounce(&sim.transient, &rig.camera, l, 0.5f64.to_radians()).unwrap();
        // The spot pixel is zeroed.
        let spot_idx = (30 * 33 + 16) as usize;
        assert!(excluded[spot_idx]);
        assert!(filtered.histogram(30, 16).iter().all(|&x| x == 0.0));
        // A pixel far off the spot direction keeps its histogram.
        let far_idx = (10 * 33 + 16) as usize;
        assert!(!excluded[far_idx]);
        assert_eq!(filtered.histogram(10, 16), sim.transient.histogram(10, 16));
        // After filtering no extracted arrival matches the one-bounce time.
        let tmpl = PulseTemplate::from_pulse(&pulse, T_RES);
        for u in 0..33 {
            for v in 0..33 {
                let est = cross_correlate(filtered.histogram(u, v), &tmpl, 0.0);
                if est.t_peak.is_finite() {
                    assert!(
                        (est.t_peak - sim.truth.t_one_bounce).abs() > T_RES,
                        "pixel ({u}, {v}) still reads the one-bounce return"
                    );
                }
            }
        }
    }

    #[test]
    fn spot_recovery_from_one_bounce() {
        let (scene, rig) = wall_rig();
        let pulse = PulseModel::new(128e-12, 80.0).unwrap();
        let sim = simulate_view(&scene, &rig, 0, &pulse, &NoiseModel::noiseless(), 391, T_RES, 0.0).unwrap();
        let tmpl = PulseTemplate::from_pulse(&pulse, T_RES);
        let (l_est, d1_est) = estimate_d1(&sim.transient, &rig, &tmpl).unwrap();
        let l_true = sim.truth.l;
        let d1_true = sim.truth.d1;
        assert!((d1_est - d1_true).abs() <= SPEED_OF_LIGHT * T_RES / 4.0, "d1 {d1_est} vs {d1_true}");
        assert!(l_est.distance(l_true) <= 2.0 * SPEED_OF_LIGHT * T_RES, "l {l_est:?} vs {l_true:?}");

        // Non-colocated rig refuses.
        let mut cam2 = rig.camera.clone();
        cam2.position = cam2.position + Vec3::new(0.5, 0.0, 0.0);
        let rig2 = rig.with_camera(cam2);
        assert!(estimate_d1(&sim.transient, &rig2, &tmpl).is_err());
    }

    #[test]
    fn masks_match_simulator_truth_noiseless() {
        // Back wall + side wall + floating occluder casting shadows on the
        // back wall; the spot sits on the side wall through pixel (46, 24).
        let scene = Scene::new(
            vec![
                Primitive { shape: Shape::Box { min: Vec3::new(-3.0, -3.0, 2.0), max: Vec3::new(3.0, 3.0, 2.3) }, albedo: 0.9 },
                Primitive { shape: Shape::Box { min: Vec3::new(-2.0, -3.0, -1.0), max: Vec3::new(-1.7, 3.0, 2.0) }, albedo: 0.8 },
                Primitive { shape: Shape::Box { min: Vec3::new(-0.6, -0.5, 1.2), max: Vec3::new(0.0, 0.5, 1.6) }, albedo: 0.7 },
            ],
            0.0,
        )
        .unwrap();
        let cam = crate::scene::CameraModel::look_at(
            Vec3::ZERO,
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(0.0, 1.0, 0.0),
            2.0,
            49,
            49,
        )
        .unwrap();
        let rig = LidarRig::resolve(cam, Vec3::new(0.004, 0.004, 0.0), &IlluminationPlan::Pixels(vec![[46, 24]]), &scene).unwrap();
        let pulse = PulseModel::new(128e-12, 80.0).unwrap();
        let sim = simulate_view(&scene, &rig, 0, &pulse, &NoiseModel::noiseless(), 391, T_RES, 0.0).unwrap();
        assert_eq!(sim.clipped_pulses, 0);
        let view = preprocess_view(
            &sim.transient,
            &rig.camera,
            sim.truth.l,
            sim.truth.d1,
            &pulse,
            0.15,
            0.5f64.to_radians(),
        )
        .unwrap();
        let mut mismatches = 0;
        for idx in 0..view.pixel_count() {
            if view.excluded[idx] || sim.truth.direct[idx] {
                continue;
            }
            if view.lit[idx] != sim.truth.observed[idx] {
                mismatches += 1;
            }
        }
        assert_eq!(mismatches, 0);
        assert!(sim.truth.observed.iter().filter(|&&o| o).count() > 1000);
        assert!(
            sim.truth
                .observed
                .iter()
                .zip(sim.truth.depth.iter())
                .filter(|(&o, d)| !o && d.is_finite())
                .count()
                > 20,
            "fixture must include shadowed pixels"
        );
    }

    #[test]
    fn extraction_round_trip_within_half_bin() {
        let (scene, rig) = wall_rig();
        let pulse = PulseModel::new(128e-12, 80.0).unwrap();
        let sim = simulate_view(&scene, &rig, 0, &pulse, &NoiseModel::noiseless(), 391, T_RES, 0.0).unwrap();
        let view = preprocess_view(&sim.transient, &rig.camera, sim.truth.l, sim.truth.d1, &pulse, 0.15, 0.5f64.to_radians()).unwrap();
        let cam = &rig.camera;
        let mut checked = 0;
        for u in 0..cam.nu {
            for v in 0..cam.nv {
                let idx = (u * cam.nv + v) as usize;
                if !view.lit[idx] || view.excluded[idx] || sim.truth.direct[idx] {
                    continue;
                }
                let hit = scene.ray_intersect(&cam.pixel_ray(u, v).unwrap()).unwrap();
                let d_total = sim.truth.d1 + sim.truth.l.distance(hit.point) + hit.point.distance(cam.position);
                let extracted = SPEED_OF_LIGHT * view.tof[idx];
                assert!(
                    (extracted - d_total).abs() <= SPEED_OF_LIGHT * T_RES / 2.0,
                    "pixel ({u}, {v}): {extracted} vs {d_total}"
                );
                checked += 1;
            }
        }
        assert!(checked > 500);
    }

    #[test]
    fn gating_matches_duration_ratio() {
        let (pulse, _) = template();
        let mut hist = vec![0.0f64; 391];
        // All signal inside a 6-bin gate.
        let center = (100.0 + 0.5) * T_RES;
        pulse.deposit(&mut hist, T_RES, 0.0, center, 3.0);
        let hist32: Vec<f32> = hist.iter().map(|&x| x as f32).collect();
        let t1 = 98.0 * T_RES;
        let t2 = 104.0 * T_RES;
        let rep = gating_report(&hist32, T_RES, 0.0, t1, t2, 0.5).unwrap();
        let expect = 391.0 / 6.0;
        assert!(
            (rep.improvement - expect).abs() / expect < 1e-9,
            "improvement {} vs {}",
            rep.improvement,
            expect
        );

        // Gate spanning everything gives no improvement.
        let full = gating_report(&hist32, T_RES, 0.0, 0.0, 391.0 * T_RES, 0.5).unwrap();
        assert!((full.improvement - 1.0).abs() < 1e-12);

        // Gate that misses the pulse has zero gated SBR.
        let miss = gating_report(&hist32, T_RES, 0.0, 0.0, 20.0 * T_RES, 0.5).unwrap();
        assert_eq!(miss.sbr_gated, 0.0);

        // Zero noise reports the infinite-SBR sentinel.
        let inf = gating_report(&hist32, T_RES, 0.0, t1, t2, 0.0).unwrap();
        assert!(inf.sbr_gated.is_infinite());
        assert!((inf.improvement - expect).abs() / expect < 1e-9);
    }
}
