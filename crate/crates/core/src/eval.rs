//! Depth/point-cloud/occupancy metrics, evaluation masks, and the
//! shadow-carving baseline.

use crate::field::OccupancyGrid;
use crate::math::{Aabb, Vec3};
use crate::rng::StreamRng;
use crate::scene::{CameraModel, LidarRig, Scene};
use crate::signal::{PreprocessedView, COLOCATION_TOL};
use crate::transient::SPEED_OF_LIGHT;
use crate::{Error, Result};
use rayon::prelude::*;

/// Per-pixel depth (distance along the camera ray) with a validity mask.
#[derive(Clone, Debug)]
pub struct DepthImage {
    pub nu: u32,
    pub nv: u32,
    /// u-major, like the transient layout: `values[u * nv + v]`.
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl DepthImage {
    pub fn new(nu: u32, nv: u32) -> DepthImage {
        let n = nu as usize * nv as usize;
        DepthImage { nu, nv, values: vec![f64::NAN; n], valid: vec![false; n] }
    }

    pub fn pixel_count(&self) -> usize {
        self.nu as usize * self.nv as usize
    }

    /// Range (max - min) of valid depths; 0 when fewer than two valid pixels.
    pub fn depth_range(&self) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (v, &ok) in self.values.iter().zip(self.valid.iter()) {
            if ok {
                lo = lo.min(*v);
                hi = hi.max(*v);
            }
        }
        if hi > lo {
            hi - lo
        } else {
            0.0
        }
    }
}

/// Mean absolute depth difference over pixels valid in both images and
/// included by the optional mask.
pub fn l1_depth(pred: &DepthImage, truth: &DepthImage, mask: Option<&[bool]>) -> Result<f64> {
    let (sum, n) = depth_error_sums(pred, truth, mask, |d| d.abs())?;
    Ok(sum / n as f64)
}

/// 10 log10(peak^2 / MSE) in dB, clamped at 100 dB for MSE below
/// peak^2 * 1e-10.
pub fn psnr_depth(pred: &DepthImage, truth: &DepthImage, mask: Option<&[bool]>, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(Error::Argument("psnr peak must be > 0".into()));
    }
    let (sum, n) = depth_error_sums(pred, truth, mask, |d| d * d)?;
    let mse = sum / n as f64;
    if mse < peak * peak * 1e-10 {
        return Ok(100.0);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

fn depth_error_sums(
    pred: &DepthImage,
    truth: &DepthImage,
    mask: Option<&[bool]>,
    f: impl Fn(f64) -> f64,
) -> Result<(f64, usize)> {
    if pred.nu != truth.nu || pred.nv != truth.nv {
        return Err(Error::Argument(format!(
            "depth image resolutions differ: {}x{} vs {}x{}",
            pred.nu, pred.nv, truth.nu, truth.nv
        )));
    }
    if let Some(m) = mask {
        if m.len() != pred.pixel_count() {
            return Err(Error::Argument("mask length mismatch".into()));
        }
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..pred.pixel_count() {
        if pred.valid[i] && truth.valid[i] && mask.map_or(true, |m| m[i]) {
            sum += f(pred.values[i] - truth.values[i]);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Data("no pixels valid in both depth images".into()));
    }
    Ok((sum, n))
}

/// A bag of 3D points.
#[derive(Clone, Debug, Default)]
pub struct PointCloud(pub Vec<Vec3>);

impl PointCloud {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Exact nearest-neighbor search tree (median-split kd-tree).
pub struct KdTree3 {
    points: Vec<Vec3>,
    nodes: Vec<KdNode>,
}

struct KdNode {
    axis: u8,
    split: f64,
    /// Child node indices, or point range for leaves.
    left: u32,
    right: u32,
    leaf_start: u32,
    leaf_end: u32,
}

const KD_LEAF: usize = 16;

impl KdTree3 {
    pub fn build(points: &[Vec3]) -> KdTree3 {
        let mut pts = points.to_vec();
        let mut tree = KdTree3 { points: Vec::new(), nodes: Vec::new() };
        if pts.is_empty() {
            tree.points = pts;
            return tree;
        }
        let n = pts.len();
        tree.build_node(&mut pts, 0, n);
        tree.points = pts;
        tree
    }

    fn build_node(&mut self, pts: &mut [Vec3], offset: usize, len: usize) -> u32 {
        let id = self.nodes.len() as u32;
        self.nodes.push(KdNode { axis: 0, split: 0.0, left: u32::MAX, right: u32::MAX, leaf_start: 0, leaf_end: 0 });
        if len <= KD_LEAF {
            self.nodes[id as usize].leaf_start = offset as u32;
            self.nodes[id as usize].leaf_end = (offset + len) as u32;
            return id;
        }
        // Longest axis of the local bounding box.
        let mut lo = Vec3::splat(f64::INFINITY);
        let mut hi = Vec3::splat(f64::NEG_INFINITY);
        for p in &pts[offset..offset + len] {
            lo = lo.min_components(*p);
            hi = hi.max_components(*p);
        }
        let e = hi - lo;
        let axis = if e.x >= e.y && e.x >= e.z {
            0u8
        } else if e.y >= e.z {
            1
        } else {
            2
        };
        let mid = len / 2;
        pts[offset..offset + len].select_nth_unstable_by(mid, |a, b| {
            a.component(axis as usize).partial_cmp(&b.component(axis as usize)).unwrap()
        });
        let split = pts[offset + mid].component(axis as usize);
        let left = self.build_node(pts, offset, mid);
        let right = self.build_node(pts, offset + mid, len - mid);
        let node = &mut self.nodes[id as usize];
        node.axis = axis;
        node.split = split;
        node.left = left;
        node.right = right;
        id
    }

    /// Distance to the nearest stored point. Panics on an empty tree.
    pub fn nearest_distance(&self, q: Vec3) -> f64 {
        assert!(!self.points.is_empty(), "nearest query on an empty tree");
        let mut best = f64::INFINITY;
        self.search(0, q, &mut best);
        best.sqrt()
    }

    fn search(&self, node_id: u32, q: Vec3, best_sq: &mut f64) {
        let node = &self.nodes[node_id as usize];
        if node.left == u32::MAX {
            for p in &self.points[node.leaf_start as usize..node.leaf_end as usize] {
                let d = (*p - q).norm_squared();
                if d < *best_sq {
                    *best_sq = d;
                }
            }
            return;
        }
        let delta = q.component(node.axis as usize) - node.split;
        let (near, far) = if delta < 0.0 { (node.left, node.right) } else { (node.right, node.left) };
        self.search(near, q, best_sq);
        if delta * delta < *best_sq {
            self.search(far, q, best_sq);
        }
    }
}

/// Symmetric Chamfer distance: 0.5 * (mean nearest-neighbor distance a->b +
/// mean b->a), unsquared Euclidean, exact.
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Argument("chamfer distance needs non-empty clouds".into()));
    }
    let tree_a = KdTree3::build(&a.0);
    let tree_b = KdTree3::build(&b.0);
    let mean_ab: f64 = a.0.par_iter().map(|&p| tree_b.nearest_distance(p)).sum::<f64>() / a.len() as f64;
    let mean_ba: f64 = b.0.par_iter().map(|&p| tree_a.nearest_distance(p)).sum::<f64>() / b.len() as f64;
    Ok(0.5 * (mean_ab + mean_ba))
}

/// Intersection over union of two occupancy grids on the same lattice,
/// optionally restricted to a region mask. An empty union counts as 1.
pub fn occupancy_iou(pred: &OccupancyGrid, truth: &OccupancyGrid, region: Option<&[bool]>) -> Result<f64> {
    if pred.res != truth.res {
        return Err(Error::Argument(format!("lattice mismatch: {:?} vs {:?}", pred.res, truth.res)));
    }
    if let Some(r) = region {
        if r.len() != pred.data.len() {
            return Err(Error::Argument("region mask length mismatch".into()));
        }
    }
    let mut inter = 0usize;
    let mut union = 0usize;
    for i in 0..pred.data.len() {
        if region.map_or(true, |r| r[i]) {
            let (p, t) = (pred.data[i], truth.data[i]);
            if p && t {
                inter += 1;
            }
            if p || t {
                union += 1;
            }
        }
    }
    if union == 0 {
        Ok(1.0)
    } else {
        Ok(inter as f64 / union as f64)
    }
}

/// Region mask: voxels of `lattice` whose centers fall inside `bounds`.
pub fn region_from_bounds(lattice: &OccupancyGrid, bounds: Aabb) -> Vec<bool> {
    let mut mask = vec![false; lattice.data.len()];
    for ix in 0..lattice.res[0] {
        for iy in 0..lattice.res[1] {
            for iz in 0..lattice.res[2] {
                if bounds.contains(lattice.voxel_center(ix, iy, iz), 0.0) {
                    mask[lattice.index(ix, iy, iz)] = true;
                }
            }
        }
    }
    mask
}

/// Ground-truth depth of a camera view by exact ray casting.
pub fn scene_depth_image(scene: &Scene, camera: &CameraModel) -> DepthImage {
    let mut img = DepthImage::new(camera.nu, camera.nv);
    let results: Vec<Option<f64>> = (0..camera.pixel_count())
        .into_par_iter()
        .map(|idx| {
            let u = (idx / camera.nv as usize) as u32;
            let v = (idx % camera.nv as usize) as u32;
            scene
                .ray_intersect(&camera.pixel_ray(u, v).expect("pixel in range"))
                .map(|h| h.t)
        })
        .collect();
    for (i, r) in results.into_iter().enumerate() {
        if let Some(t) = r {
            img.values[i] = t;
            img.valid[i] = true;
        }
    }
    img
}

/// Ground-truth occupancy by point containment at voxel centers.
pub fn scene_occupancy(scene: &Scene, res: [usize; 3], bounds: Aabb) -> OccupancyGrid {
    let mut occ = OccupancyGrid::empty(res, bounds);
    let data: Vec<bool> = (0..res[0] * res[1] * res[2])
        .into_par_iter()
        .map(|i| {
            let iz = i % res[2];
            let iy = (i / res[2]) % res[1];
            let ix = i / (res[1] * res[2]);
            scene.contains_point(occ.voxel_center(ix, iy, iz))
        })
        .collect();
    occ.data = data;
    occ
}

/// Inclusion mask for depth metrics: a pixel is excluded when its surface
/// point receives no two-bounce signal from any illumination spot (true =
/// include in metrics).
pub fn behind_object_mask(scene: &Scene, rig: &LidarRig, camera: &CameraModel) -> Vec<bool> {
    (0..camera.pixel_count())
        .into_par_iter()
        .map(|idx| {
            let u = (idx / camera.nv as usize) as u32;
            let v = (idx % camera.nv as usize) as u32;
            match scene.ray_intersect(&camera.pixel_ray(u, v).expect("pixel in range")) {
                Some(hit) => rig
                    .spots()
                    .iter()
                    .any(|s| scene.segment_visible(s.point, hit.point)),
                None => true, // no surface: validity masks handle it
            }
        })
        .collect()
}

/// Shadow-carving occupancy baseline.
///
/// Start fully occupied; for every lit pixel, recover its surface point from
/// the extracted time of flight (1D root find along the pixel ray, assuming
/// a colocated rig), then free every voxel along sensor -> surface and
/// surface -> spot, staying one voxel clear of the surfaces themselves.
pub fn shadow_carve(
    views: &[PreprocessedView],
    rig: &LidarRig,
    res: [usize; 3],
    bounds: Aabb,
) -> Result<OccupancyGrid> {
    let cam = &rig.camera;
    if cam.position.distance(rig.laser_position) > COLOCATION_TOL {
        return Err(Error::Argument(
            "shadow carving needs a colocated rig: the time-of-flight inversion is ambiguous otherwise".into(),
        ));
    }
    let mut occ = OccupancyGrid::empty(res, bounds);
    occ.data = vec![true; occ.data.len()];
    let voxel = {
        let e = bounds.extent();
        (e.x / res[0] as f64).min(e.y / res[1] as f64).min(e.z / res[2] as f64)
    };
    let margin = voxel * 1.8; // stay clear of the surfaces at both segment ends
    let step = voxel * 0.5;

    for view in views {
        if view.nu != cam.nu || view.nv != cam.nv {
            return Err(Error::Data("view resolution does not match the rig camera".into()));
        }
        for u in 0..cam.nu {
            for v in 0..cam.nv {
                let idx = (u * cam.nv + v) as usize;
                if !view.lit[idx] || view.excluded[idx] {
                    continue;
                }
                let tof = view.tof[idx];
                if !tof.is_finite() {
                    continue;
                }
                let ray = cam.pixel_ray(u, v)?;
                let rhs = SPEED_OF_LIGHT * tof - view.d1;
                let Some(t_hit) = invert_path_length(ray.origin, ray.dir, view.l, rhs) else {
                    continue;
                };
                let x_p = ray.at(t_hit);
                // Sensor -> surface.
                carve_segment(&mut occ, ray.origin, x_p, 0.0, margin, step);
                // Surface -> spot.
                carve_segment(&mut occ, x_p, view.l, margin, margin, step);
            }
        }
    }
    Ok(occ)
}

/// Solve t + |l - (o + t d)| = rhs for t >= 0 (monotone; bisection to 1e-6).
fn invert_path_length(o: Vec3, d: Vec3, l: Vec3, rhs: f64) -> Option<f64> {
    let f = |t: f64| t + (l - (o + d * t)).norm() - rhs;
    if f(0.0) > 0.0 {
        return None; // even the sensor itself is too far
    }
    let mut hi = rhs.max(1e-3); // t <= rhs since |l - x| >= 0
    if f(hi) < 0.0 {
        hi = rhs * 2.0 + 1.0;
        if f(hi) < 0.0 {
            return None;
        }
    }
    let mut lo = 0.0;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if f(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-6 {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}

fn carve_segment(occ: &mut OccupancyGrid, a: Vec3, b: Vec3, margin_a: f64, margin_b: f64, step: f64) {
    let len = a.distance(b);
    if len <= margin_a + margin_b {
        return;
    }
    let dir = (b - a) / len;
    let mut t = margin_a;
    while t <= len - margin_b {
        if let Some([ix, iy, iz]) = occ.voxel_of(a + dir * t) {
            let idx = occ.index(ix, iy, iz);
            occ.data[idx] = false;
        }
        t += step;
    }
}

/// Cameras on a horizontal circle of `radius` at `height` above `center`,
/// all looking at `center`.
pub fn orbit_poses(
    center: Vec3,
    radius: f64,
    height: f64,
    count: usize,
    fov: f64,
    nu: u32,
    nv: u32,
) -> Result<Vec<CameraModel>> {
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let angle = std::f64::consts::TAU * i as f64 / count as f64;
        let pos = center + Vec3::new(radius * angle.cos(), height, radius * angle.sin());
        out.push(CameraModel::look_at(pos, center, Vec3::new(0.0, 1.0, 0.0), fov, nu, nv)?);
    }
    Ok(out)
}

/// `n` points drawn uniformly from the surface of a scene (for ground-truth
/// clouds).
pub fn scene_point_cloud(scene: &Scene, n: usize, seed: u64) -> PointCloud {
    let mut rng = StreamRng::from_key(&[seed, 0x9d0c]);
    PointCloud(scene.sample_surface(n, &mut rng))
}
