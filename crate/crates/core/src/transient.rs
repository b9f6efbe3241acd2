//! Forward renderer for two-bounce transient histograms.
//!
//! For every pixel the simulator traces the camera ray to its first surface
//! point, connects that point to the active laser spot, and deposits a
//! Gaussian pulse at the two-bounce arrival time when the connecting segment
//! is unobstructed. The pixel that images the spot itself receives the
//! (much stronger) one-bounce return instead. Output is either expected
//! photon counts or deterministic Poisson draws of them.

use crate::math::{erf, Vec3};
use crate::rng::StreamRng;
use crate::scene::{LidarRig, Scene};
use crate::{Error, Result};
use rayon::prelude::*;

/// Speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 2.99792458e8;

/// Distance below which a surface point counts as the laser spot itself and
/// the pixel is treated as the direct (one-bounce) return.
pub const DIRECT_RETURN_RADIUS: f64 = 1e-3;

/// A per-pixel photon-count histogram cube with timing metadata.
#[derive(Clone, Debug)]
pub struct TransientImage {
    pub nu: u32,
    pub nv: u32,
    pub nt: u32,
    /// Seconds per bin.
    pub t_res: f64,
    /// Time of the leading edge of bin 0, seconds.
    pub t_start: f64,
    /// Illumination index this capture belongs to.
    pub k: u32,
    /// Bins in (u-major, v, t) order: `data[(u * nv + v) * nt + t]`.
    pub data: Vec<f32>,
    /// Trailing bins discarded by a non-dividing temporal downsample.
    pub dropped_tail_bins: u32,
}

impl TransientImage {
    pub fn zeroed(nu: u32, nv: u32, nt: u32, t_res: f64, t_start: f64, k: u32) -> Result<TransientImage> {
        if nt == 0 || nu == 0 || nv == 0 {
            return Err(Error::Argument("transient dimensions must be positive".into()));
        }
        if !(t_res > 0.0) {
            return Err(Error::Argument("t_res must be > 0".into()));
        }
        Ok(TransientImage {
            nu,
            nv,
            nt,
            t_res,
            t_start,
            k,
            data: vec![0.0; nu as usize * nv as usize * nt as usize],
            dropped_tail_bins: 0,
        })
    }

    #[inline]
    pub fn offset(&self, u: u32, v: u32) -> usize {
        (u as usize * self.nv as usize + v as usize) * self.nt as usize
    }

    pub fn histogram(&self, u: u32, v: u32) -> &[f32] {
        let o = self.offset(u, v);
        &self.data[o..o + self.nt as usize]
    }

    /// Center time of a bin, seconds.
    pub fn bin_center(&self, bin: usize) -> f64 {
        self.t_start + (bin as f64 + 0.5) * self.t_res
    }

    pub fn duration(&self) -> f64 {
        self.nt as f64 * self.t_res
    }

    /// Total photon count, accumulated in f64.
    pub fn total_count(&self) -> f64 {
        self.data.iter().map(|&x| x as f64).sum()
    }
}

/// Laser pulse: a Gaussian of the given full width at half maximum whose
/// discretized bin integrals sum to `amplitude`.
#[derive(Clone, Copy, Debug)]
pub struct PulseModel {
    pub fwhm: f64,
    pub amplitude: f64,
}

impl PulseModel {
    pub fn new(fwhm: f64, amplitude: f64) -> Result<PulseModel> {
        if !(fwhm > 0.0) {
            return Err(Error::Argument("pulse fwhm must be > 0".into()));
        }
        if !(amplitude > 0.0) {
            return Err(Error::Argument("pulse amplitude must be > 0".into()));
        }
        Ok(PulseModel { fwhm, amplitude })
    }

    /// Gaussian sigma corresponding to the fwhm.
    pub fn sigma(&self) -> f64 {
        self.fwhm / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt())
    }

    /// Integral of the unit-mass Gaussian centered at `center` over [lo, hi].
    pub fn mass_between(&self, center: f64, lo: f64, hi: f64) -> f64 {
        let s = self.sigma() * std::f64::consts::SQRT_2;
        0.5 * (erf((hi - center) / s) - erf((lo - center) / s))
    }

    /// Deposit `scale * amplitude` photons as a pulse centered at `center`
    /// seconds into a histogram. Returns true when part of the pulse fell
    /// outside the histogram window.
    pub fn deposit(&self, hist: &mut [f64], t_res: f64, t_start: f64, center: f64, scale: f64) -> bool {
        let total = self.amplitude * scale;
        if total <= 0.0 {
            return false;
        }
        let span = 6.0 * self.sigma();
        let nt = hist.len() as f64;
        let clipped = center - span < t_start || center + span > t_start + nt * t_res;
        let lo_bin = (((center - span - t_start) / t_res).floor().max(0.0)) as usize;
        let hi_bin = ((((center + span - t_start) / t_res).ceil()).min(nt)).max(0.0) as usize;
        for b in lo_bin..hi_bin {
            let lo = t_start + b as f64 * t_res;
            let hi = lo + t_res;
            hist[b] += total * self.mass_between(center, lo, hi);
        }
        clipped
    }
}

/// Background and sampling model. Ambient photons are uniform over time.
#[derive(Clone, Copy, Debug)]
pub struct NoiseModel {
    /// Expected ambient photons per bin per pixel.
    pub ambient_rate: f64,
    /// Replace expected counts with Poisson draws.
    pub poisson_sampling: bool,
    pub seed: u64,
}

impl NoiseModel {
    pub fn noiseless() -> NoiseModel {
        NoiseModel { ambient_rate: 0.0, poisson_sampling: false, seed: 0 }
    }
}

/// Geometry of a single two-bounce path: laser -> spot (d1), spot -> surface
/// point (d2), surface point -> sensor (d3).
#[derive(Clone, Copy, Debug)]
pub struct TwoBouncePath {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    /// True iff the spot-to-surface segment is unobstructed.
    pub lit: bool,
    /// Arrival time (d1 + d2 + d3) / c, defined only when lit.
    pub t_peak: Option<f64>,
}

/// Classification of a surface point relative to the active spot.
#[derive(Clone, Copy, Debug)]
pub enum PathClass {
    TwoBounce(TwoBouncePath),
    /// The surface point coincides with the spot; the pixel sees the
    /// one-bounce return and is excluded from two-bounce output.
    DirectReturn,
}

/// Path geometry between the active spot `l` and a surface point `x_p`.
pub fn compute_path(rig: &LidarRig, scene: &Scene, l: Vec3, x_p: Vec3) -> PathClass {
    let d2 = l.distance(x_p);
    if d2 < 1e-6 {
        return PathClass::DirectReturn;
    }
    let d1 = rig.laser_position.distance(l);
    let d3 = x_p.distance(rig.camera.position);
    let lit = scene.segment_visible(l, x_p);
    let t_peak = lit.then(|| (d1 + d2 + d3) / SPEED_OF_LIGHT);
    PathClass::TwoBounce(TwoBouncePath { d1, d2, d3, lit, t_peak })
}

/// Lambertian two-bounce weight: albedos at both bounces, cosine factors at
/// the spot and the surface point, inverse-square falloff over d2 only (the
/// sensor pixel integrates a fixed solid angle).
pub fn two_bounce_weight(
    spot_albedo: f64,
    spot_normal: Vec3,
    surface_albedo: f64,
    surface_normal: Vec3,
    l: Vec3,
    x_p: Vec3,
    x_s: Vec3,
    d2: f64,
) -> f64 {
    let w_lp = (x_p - l) / d2;
    let d3 = x_p.distance(x_s);
    if d3 < 1e-9 {
        return 0.0;
    }
    let w_ps = (x_s - x_p) / d3;
    let cos_l = spot_normal.dot(w_lp).max(0.0);
    let cos_in = surface_normal.dot(-w_lp).max(0.0);
    let cos_out = surface_normal.dot(w_ps).max(0.0);
    spot_albedo * surface_albedo * cos_l * cos_in * cos_out / (d2 * d2)
}

/// Per-view ground truth exported next to the transient.
#[derive(Clone, Debug)]
pub struct ViewTruth {
    pub k: u32,
    pub nu: u32,
    pub nv: u32,
    /// Resolved spot position.
    pub l: Vec3,
    /// Laser-to-spot distance.
    pub d1: f64,
    /// One-bounce arrival time, seconds.
    pub t_one_bounce: f64,
    /// Per-pixel first-hit distance along the camera ray; NaN on miss.
    pub depth: Vec<f64>,
    /// segment_visible(l, x_p) per pixel (false on miss).
    pub visible: Vec<bool>,
    /// True where a nonzero two-bounce pulse was actually deposited.
    pub observed: Vec<bool>,
    /// True on the pixel(s) that image the spot itself.
    pub direct: Vec<bool>,
}

/// Simulation output: the histogram cube, its ground truth, and a counter of
/// pulses that fell (partly) outside the time window.
#[derive(Clone, Debug)]
pub struct SimulatedView {
    pub transient: TransientImage,
    pub truth: ViewTruth,
    pub clipped_pulses: u32,
}

struct PixelTrace {
    depth: f64,
    visible: bool,
    direct: bool,
    weight: f64,
    t_peak: f64,
}

/// Render the transient for illumination index `k`.
pub fn simulate_view(
    scene: &Scene,
    rig: &LidarRig,
    k: usize,
    pulse: &PulseModel,
    noise: &NoiseModel,
    nt: u32,
    t_res: f64,
    t_start: f64,
) -> Result<SimulatedView> {
    let spot = *rig.spot(k)?;
    let cam = &rig.camera;
    let l = spot.point;
    let d1 = rig.laser_position.distance(l);
    let t_one_bounce = (d1 + l.distance(cam.position)) / SPEED_OF_LIGHT;
    let npix = cam.pixel_count();

    // Pass 1: geometry per pixel.
    let traces: Vec<PixelTrace> = (0..npix)
        .into_par_iter()
        .map(|idx| {
            let u = (idx / cam.nv as usize) as u32;
            let v = (idx % cam.nv as usize) as u32;
            let ray = cam.pixel_ray(u, v).expect("pixel in range");
            let mut tr = PixelTrace { depth: f64::NAN, visible: false, direct: false, weight: 0.0, t_peak: 0.0 };
            if let Some(hit) = scene.ray_intersect(&ray) {
                tr.depth = hit.t;
                if hit.point.distance(l) <= DIRECT_RETURN_RADIUS {
                    tr.direct = true;
                } else {
                    match compute_path(rig, scene, l, hit.point) {
                        PathClass::DirectReturn => tr.direct = true,
                        PathClass::TwoBounce(path) => {
                            tr.visible = path.lit;
                            if let Some(t) = path.t_peak {
                                tr.t_peak = t;
                                tr.weight = two_bounce_weight(
                                    spot.albedo,
                                    spot.normal,
                                    hit.albedo,
                                    hit.normal,
                                    l,
                                    hit.point,
                                    cam.position,
                                    path.d2,
                                );
                            }
                        }
                    }
                }
            }
            tr
        })
        .collect();

    let max_weight = traces.iter().map(|t| t.weight).fold(0.0_f64, f64::max);
    let one_bounce_weight = 10.0 * max_weight;

    // Pass 2: deposit pulses, add ambient, optionally sample.
    let mut img = TransientImage::zeroed(cam.nu, cam.nv, nt, t_res, t_start, k as u32)?;
    let nt_us = nt as usize;
    let window_end = t_start + nt as f64 * t_res;

    let results: Vec<(Vec<f32>, bool, bool)> = traces
        .par_iter()
        .enumerate()
        .map(|(idx, tr)| {
            let mut hist = vec![0.0f64; nt_us];
            let mut clipped = false;
            if tr.direct && one_bounce_weight > 0.0 {
                clipped |= pulse.deposit(&mut hist, t_res, t_start, t_one_bounce, one_bounce_weight);
                clipped |= t_one_bounce < t_start || t_one_bounce > window_end;
            }
            if tr.visible && tr.weight > 0.0 {
                clipped |= pulse.deposit(&mut hist, t_res, t_start, tr.t_peak, tr.weight);
                clipped |= tr.t_peak < t_start || tr.t_peak > window_end;
            }
            // Observed = the two-bounce deposit survives the f32 cast.
            let observed = tr.visible && hist.iter().any(|&x| x as f32 > 0.0) && !tr.direct;
            if noise.ambient_rate > 0.0 {
                for b in hist.iter_mut() {
                    *b += noise.ambient_rate;
                }
            }
            let out: Vec<f32> = if noise.poisson_sampling {
                let u = (idx / cam.nv as usize) as u64;
                let v = (idx % cam.nv as usize) as u64;
                hist.iter()
                    .enumerate()
                    .map(|(b, &lambda)| {
                        let mut r = StreamRng::from_key(&[noise.seed, k as u64, u, v, b as u64]);
                        r.next_poisson(lambda) as f32
                    })
                    .collect()
            } else {
                hist.iter().map(|&x| x as f32).collect()
            };
            (out, observed, clipped)
        })
        .collect();

    let mut observed = vec![false; npix];
    let mut clipped_pulses = 0u32;
    for (idx, (hist, obs, clipped)) in results.into_iter().enumerate() {
        let base = idx * nt_us;
        img.data[base..base + nt_us].copy_from_slice(&hist);
        observed[idx] = obs;
        if clipped {
            clipped_pulses += 1;
        }
    }

    let truth = ViewTruth {
        k: k as u32,
        nu: cam.nu,
        nv: cam.nv,
        l,
        d1,
        t_one_bounce,
        depth: traces.iter().map(|t| t.depth).collect(),
        visible: traces.iter().map(|t| t.visible).collect(),
        observed,
        direct: traces.iter().map(|t| t.direct).collect(),
    };

    Ok(SimulatedView { transient: img, truth, clipped_pulses })
}

/// Sum groups of `factor` consecutive bins. A non-dividing factor drops the
/// trailing partial bin and records it in the metadata.
pub fn downsample_temporal(img: &TransientImage, factor: u32) -> Result<TransientImage> {
    if factor == 0 {
        return Err(Error::Argument("temporal downsample factor must be >= 1".into()));
    }
    if factor == 1 {
        return Ok(img.clone());
    }
    let new_nt = img.nt / factor;
    if new_nt == 0 {
        return Err(Error::Argument(format!("factor {factor} larger than bin count {}", img.nt)));
    }
    let dropped = img.nt - new_nt * factor;
    let mut out = TransientImage::zeroed(img.nu, img.nv, new_nt, img.t_res * factor as f64, img.t_start, img.k)?;
    out.dropped_tail_bins = img.dropped_tail_bins + dropped;
    let nt_in = img.nt as usize;
    let nt_out = new_nt as usize;
    let f = factor as usize;
    for pix in 0..(img.nu as usize * img.nv as usize) {
        let src = &img.data[pix * nt_in..(pix + 1) * nt_in];
        let dst = &mut out.data[pix * nt_out..(pix + 1) * nt_out];
        for (b, slot) in dst.iter_mut().enumerate() {
            let mut acc = 0.0f64;
            for s in &src[b * f..(b + 1) * f] {
                acc += *s as f64;
            }
            *slot = acc as f32;
        }
    }
    Ok(out)
}

/// Sum factor x factor pixel blocks per bin. The factor must divide both
/// spatial dimensions.
pub fn downsample_spatial(img: &TransientImage, factor: u32) -> Result<TransientImage> {
    if factor == 0 {
        return Err(Error::Argument("spatial downsample factor must be >= 1".into()));
    }
    if factor == 1 {
        return Ok(img.clone());
    }
    if img.nu % factor != 0 || img.nv % factor != 0 {
        return Err(Error::Argument(format!(
            "factor {factor} does not divide resolution {}x{}",
            img.nu, img.nv
        )));
    }
    let nu = img.nu / factor;
    let nv = img.nv / factor;
    let mut out = TransientImage::zeroed(nu, nv, img.nt, img.t_res, img.t_start, img.k)?;
    out.dropped_tail_bins = img.dropped_tail_bins;
    let nt = img.nt as usize;
    let f = factor as usize;
    for u in 0..nu as usize {
        for v in 0..nv as usize {
            let dst_base = (u * nv as usize + v) * nt;
            for du in 0..f {
                for dv in 0..f {
                    let su = u * f + du;
                    let sv = v * f + dv;
                    let src_base = (su * img.nv as usize + sv) * nt;
                    for t in 0..nt {
                        // f64 accumulate per output slot to keep block sums exact
                        // for count-valued data.
                        let acc = out.data[dst_base + t] as f64 + img.data[src_base + t] as f64;
                        out.data[dst_base + t] = acc as f32;
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Mat3;
    use crate::scene::{CameraModel, IlluminationPlan, Primitive, Shape};

    /// Colocated rig at the origin looking toward +z. A back wall faces the
    /// camera and the laser spot sits on a perpendicular side wall, so the
    /// back wall receives real two-bounce energy.
    fn colocated_fixture() -> (Scene, LidarRig) {
        let scene = Scene::new(
            vec![
                Primitive {
                    shape: Shape::Box { min: Vec3::new(-4.0, -4.0, 2.0), max: Vec3::new(4.0, 4.0, 2.5) },
                    albedo: 0.9,
                },
                Primitive {
                    shape: Shape::Box { min: Vec3::new(-2.5, -4.0, -1.0), max: Vec3::new(-2.0, 4.0, 2.0) },
                    albedo: 0.8,
                },
            ],
            0.0,
        )
        .unwrap();
        let cam = CameraModel::look_at(
            Vec3::ZERO,
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(0.0, 1.0, 0.0),
            1.4,
            33,
            33,
        )
        .unwrap();
        let rig = LidarRig::resolve(
            cam,
            Vec3::ZERO,
            &IlluminationPlan::Targets(vec![Vec3::new(-2.0, 0.0, 1.0)]),
            &scene,
        )
        .unwrap();
        (scene, rig)
    }

    #[test]
    fn path_closed_form_example() {
        let (scene, rig) = colocated_fixture();
        let l = Vec3::new(0.0, 0.0, 2.0);
        let x_p = Vec3::new(1.0, 0.0, 2.0);
        match compute_path(&rig, &scene, l, x_p) {
            PathClass::TwoBounce(p) => {
                assert!((p.d1 - 2.0).abs() < 1e-12);
                assert!((p.d2 - 1.0).abs() < 1e-12);
                assert!((p.d3 - 5.0_f64.sqrt()).abs() < 1e-12);
                assert!(p.lit);
                let t = p.t_peak.unwrap();
                let expect = (3.0 + 5.0_f64.sqrt()) / SPEED_OF_LIGHT;
                assert!((t - expect).abs() < 1e-18);
                // ~17.4656 ns
                assert!((t * 1e9 - 17.46564).abs() < 5e-4, "t = {} ns", t * 1e9);
            }
            PathClass::DirectReturn => panic!("unexpected direct return"),
        }
    }

    #[test]
    fn coincident_point_flags_direct_return() {
        let (scene, rig) = colocated_fixture();
        let l = Vec3::new(0.0, 0.0, 2.0);
        assert!(matches!(compute_path(&rig, &scene, l, l), PathClass::DirectReturn));
    }

    #[test]
    fn occluded_segment_is_unlit() {
        // Occluder straddles the wall-plane segment between the spot and the
        // right half of the wall.
        let scene = Scene::new(
            vec![
                Primitive { shape: Shape::Box { min: Vec3::new(-4.0, -4.0, 2.0), max: Vec3::new(4.0, 4.0, 2.5) }, albedo: 0.9 },
                Primitive { shape: Shape::Box { min: Vec3::new(0.9, -0.5, 1.6), max: Vec3::new(1.1, 0.5, 2.1) }, albedo: 0.9 },
            ],
            0.0,
        )
        .unwrap();
        let cam = CameraModel::new(Vec3::ZERO, Mat3::identity(), 1.0, 8, 8).unwrap();
        let rig = LidarRig::resolve(
            cam,
            Vec3::ZERO,
            &IlluminationPlan::Directions(vec![Vec3::new(0.0, 0.0, 1.0)]),
            &scene,
        )
        .unwrap();
        let l = rig.spot(0).unwrap().point;
        match compute_path(&rig, &scene, l, Vec3::new(-1.5, 0.0, 2.0)) {
            PathClass::TwoBounce(p) => assert!(p.lit, "clear segment must be lit"),
            _ => panic!("unexpected direct return"),
        }
        match compute_path(&rig, &scene, l, Vec3::new(2.0, 0.0, 2.0)) {
            PathClass::TwoBounce(p) => {
                assert!(!p.lit, "segment through the occluder must be shadowed");
                assert!(p.t_peak.is_none());
            }
            _ => panic!("unexpected direct return"),
        }
    }

    #[test]
    fn closed_form_arrival_falls_in_bin_136() {
        // (2 + 1 + sqrt5) meters of optical path at 128 ps bins.
        let t = (3.0 + 5.0_f64.sqrt()) / SPEED_OF_LIGHT;
        assert_eq!((t / 128e-12).floor() as i64, 136);
    }

    #[test]
    fn simulated_peak_matches_path_time_per_pixel() {
        let (scene, rig) = colocated_fixture();
        let pulse = PulseModel::new(128e-12, 100.0).unwrap();
        let sim = simulate_view(&scene, &rig, 0, &pulse, &NoiseModel::noiseless(), 391, 128e-12, 0.0).unwrap();
        let cam = &rig.camera;
        let l = sim.truth.l;
        let mut checked = 0;
        for u in 0..cam.nu {
            for v in 0..cam.nv {
                let idx = (u * cam.nv + v) as usize;
                if !sim.truth.observed[idx] {
                    continue;
                }
                let hit = scene.ray_intersect(&cam.pixel_ray(u, v).unwrap()).unwrap();
                let t_true = (rig.laser_position.distance(l) + l.distance(hit.point)
                    + hit.point.distance(cam.position))
                    / SPEED_OF_LIGHT;
                let hist = sim.transient.histogram(u, v);
                let argmax = hist
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap()
                    .0;
                let center = sim.transient.bin_center(argmax);
                assert!(
                    (center - t_true).abs() <= 0.5 * 128e-12 + 1e-15,
                    "pixel ({u}, {v}): argmax center {center:e}, true {t_true:e}"
                );
                checked += 1;
            }
        }
        assert!(checked > 500, "expected many observed pixels, got {checked}");
        assert_eq!(sim.clipped_pulses, 0);
    }

    #[test]
    fn shadowed_pixel_without_ambient_is_all_zero() {
        // Back wall + side wall with the spot, plus a floating occluder that
        // shadows part of the back wall.
        let scene = Scene::new(
            vec![
                Primitive { shape: Shape::Box { min: Vec3::new(-4.0, -4.0, 2.0), max: Vec3::new(4.0, 4.0, 2.5) }, albedo: 0.9 },
                Primitive { shape: Shape::Box { min: Vec3::new(-2.5, -4.0, -1.0), max: Vec3::new(-2.0, 4.0, 2.0) }, albedo: 0.8 },
                Primitive { shape: Shape::Box { min: Vec3::new(-0.5, -0.6, 1.3), max: Vec3::new(0.2, 0.6, 1.7) }, albedo: 0.9 },
            ],
            0.0,
        )
        .unwrap();
        let cam = CameraModel::look_at(Vec3::ZERO, Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.0, 1.0, 0.0), 1.4, 65, 65).unwrap();
        let rig = LidarRig::resolve(
            cam,
            Vec3::new(0.0, 0.0, 0.0),
            &IlluminationPlan::Targets(vec![Vec3::new(-2.0, 0.0, 1.0)]),
            &scene,
        )
        .unwrap();
        let pulse = PulseModel::new(128e-12, 100.0).unwrap();
        let sim = simulate_view(&scene, &rig, 0, &pulse, &NoiseModel::noiseless(), 391, 128e-12, 0.0).unwrap();
        let npix = rig.camera.pixel_count();
        let mut shadow_checked = 0;
        for idx in 0..npix {
            if !sim.truth.visible[idx] && !sim.truth.direct[idx] && sim.truth.depth[idx].is_finite() {
                let u = (idx / 65) as u32;
                let v = (idx % 65) as u32;
                assert!(sim.transient.histogram(u, v).iter().all(|&x| x == 0.0));
                shadow_checked += 1;
            }
        }
        assert!(shadow_checked > 0, "fixture must contain shadowed pixels");
        assert!(
            sim.truth.observed.iter().filter(|&&o| o).count() > 500,
            "fixture must contain observed pixels"
        );
        // Lit classification matches segment_visible recomputed directly.
        for idx in 0..npix {
            if sim.truth.depth[idx].is_finite() && !sim.truth.direct[idx] {
                let u = (idx / 65) as u32;
                let v = (idx % 65) as u32;
                let hit = scene.ray_intersect(&rig.camera.pixel_ray(u, v).unwrap()).unwrap();
                assert_eq!(
                    sim.truth.visible[idx],
                    scene.segment_visible(sim.truth.l, hit.point),
                    "pixel ({u}, {v})"
                );
            }
        }
    }

    #[test]
    fn ambient_only_image_is_flat() {
        let (scene, rig) = colocated_fixture();
        // Aim the camera away from every surface.
        let cam = CameraModel::look_at(
            Vec3::ZERO,
            Vec3::new(0.0, 0.0, -1.0),
            Vec3::new(0.0, 1.0, 0.0),
            1.0,
            8,
            8,
        )
        .unwrap();
        let rig = rig.with_camera(cam);
        let pulse = PulseModel::new(128e-12, 100.0).unwrap();
        let noise = NoiseModel { ambient_rate: 0.75, poisson_sampling: false, seed: 0 };
        let sim = simulate_view(&scene, &rig, 0, &pulse, &noise, 64, 128e-12, 0.0).unwrap();
        assert!(sim.transient.data.iter().all(|&x| (x - 0.75).abs() < 1e-7));
    }

    #[test]
    fn pulse_discretization_integrates_to_amplitude() {
        let pulse = PulseModel::new(128e-12, 37.5).unwrap();
        let mut hist = vec![0.0f64; 400];
        let clipped = pulse.deposit(&mut hist, 128e-12, 0.0, 200.5 * 128e-12, 1.0);
        assert!(!clipped);
        let total: f64 = hist.iter().sum();
        assert!((total - 37.5).abs() / 37.5 < 1e-6, "total = {total}");
    }

    #[test]
    fn out_of_window_pulse_counts_as_clipped() {
        let (scene, rig) = colocated_fixture();
        let pulse = PulseModel::new(128e-12, 100.0).unwrap();
        // 10 bins of 128 ps = 1.28 ns window; every return (~13 ns) is clipped.
        let sim = simulate_view(&scene, &rig, 0, &pulse, &NoiseModel::noiseless(), 10, 128e-12, 0.0).unwrap();
        assert!(sim.clipped_pulses > 0);
    }

    #[test]
    fn poisson_output_bit_identical_across_thread_counts() {
        let (scene, rig) = colocated_fixture();
        let pulse = PulseModel::new(128e-12, 50.0).unwrap();
        let noise = NoiseModel { ambient_rate: 0.4, poisson_sampling: true, seed: 99 };
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| simulate_view(&scene, &rig, 0, &pulse, &noise, 128, 128e-12, 0.0).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.transient.data, b.transient.data);
        let c = run(4);
        assert_eq!(b.transient.data, c.transient.data);
        // Counts are integers.
        assert!(a.transient.data.iter().all(|&x| x.fract() == 0.0));
    }

    #[test]
    fn temporal_downsample_pairwise_sum() {
        let mut img = TransientImage::zeroed(1, 1, 4, 1e-10, 0.0, 0).unwrap();
        img.data.copy_from_slice(&[1.0, 2.0, 3.0, 4.0]);
        let out = downsample_temporal(&img, 2).unwrap();
        assert_eq!(out.data, vec![3.0, 7.0]);
        assert!((out.t_res - 2e-10).abs() < 1e-25);
        assert_eq!(out.dropped_tail_bins, 0);
    }

    #[test]
    fn temporal_downsample_identity_and_errors() {
        let img = TransientImage::zeroed(2, 2, 8, 1e-10, 0.0, 0).unwrap();
        let same = downsample_temporal(&img, 1).unwrap();
        assert_eq!(same.data, img.data);
        assert!(downsample_temporal(&img, 0).is_err());
        // Non-dividing factor drops the tail and records it.
        let out = downsample_temporal(&img, 3).unwrap();
        assert_eq!(out.nt, 2);
        assert_eq!(out.dropped_tail_bins, 2);
    }

    #[test]
    fn spatial_downsample_shapes_and_conservation() {
        let mut img = TransientImage::zeroed(8, 8, 3, 1e-10, 0.0, 0).unwrap();
        for (i, slot) in img.data.iter_mut().enumerate() {
            *slot = (i % 13) as f32;
        }
        let out = downsample_spatial(&img, 4).unwrap();
        assert_eq!((out.nu, out.nv), (2, 2));
        for t in 0..3 {
            let before: f64 = (0..8 * 8)
                .map(|p| img.data[p * 3 + t] as f64)
                .sum();
            let after: f64 = (0..2 * 2)
                .map(|p| out.data[p * 3 + t] as f64)
                .sum();
            assert!((before - after).abs() < 1e-9, "bin {t}");
        }
        assert!(downsample_spatial(&img, 3).is_err());
        assert_eq!(downsample_spatial(&img, 1).unwrap().data, img.data);
    }

    #[test]
    fn weight_decreases_with_distance_at_fixed_angles() {
        // Slide the surface point away from the spot along a fixed direction
        // and carry the sensor along at a fixed offset, so every cosine is
        // constant and only the 1/d2^2 falloff varies.
        let l = Vec3::ZERO;
        let n_l = Vec3::new(0.0, 0.0, 1.0);
        let dir = Vec3::new(0.6, 0.0, 0.8); // cos at the spot: 0.8
        let n_p = -dir;
        let sensor_offset = dir * -1.0; // sensor 1 m back toward the spot
        let mut prev = f64::INFINITY;
        for step in 1..10 {
            let d2 = step as f64 * 0.5;
            let x_p = l + dir * d2;
            let x_s = x_p + sensor_offset;
            let w = two_bounce_weight(0.9, n_l, 0.9, n_p, l, x_p, x_s, d2);
            assert!(w > 0.0);
            assert!(w < prev, "weight must fall with d2: {w} !< {prev}");
            prev = w;
        }
    }
}
