//! Scene description and exact ray-geometry queries.
//!
//! The scene is immutable after construction. Both the transient simulator
//! and the evaluation ground truth are built on the queries here, so the
//! intersection code is the single geometric oracle of the toolkit.

use crate::math::{Aabb, Mat3, Ray, Vec3};
use crate::rng::StreamRng;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Minimum ray parameter accepted by intersection queries (meters).
pub const T_EPS: f64 = 1e-6;
/// Endpoint tolerance of segment visibility queries (meters).
pub const VIS_EPS: f64 = 1e-5;

/// Geometric shape of a primitive.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    Sphere { center: Vec3, radius: f64 },
    Box { min: Vec3, max: Vec3 },
    Mesh { vertices: Vec<Vec3>, faces: Vec<[usize; 3]> },
}

/// A shape with a Lambertian albedo in [0, 1].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Primitive {
    pub shape: Shape,
    pub albedo: f64,
}

impl Primitive {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.albedo) {
            return Err(Error::Argument(format!("albedo {} outside [0, 1]", self.albedo)));
        }
        match &self.shape {
            Shape::Sphere { center, radius } => {
                if !center.is_finite() || !radius.is_finite() || *radius <= 0.0 {
                    return Err(Error::Argument("sphere needs finite center and radius > 0".into()));
                }
            }
            Shape::Box { min, max } => {
                if !(min.x < max.x && min.y < max.y && min.z < max.z) {
                    return Err(Error::Argument("box min must be strictly below max componentwise".into()));
                }
            }
            Shape::Mesh { vertices, faces } => {
                for f in faces {
                    if f.iter().any(|&i| i >= vertices.len()) {
                        return Err(Error::Argument("mesh face indexes a missing vertex".into()));
                    }
                }
                if vertices.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Argument("mesh vertex not finite".into()));
                }
            }
        }
        Ok(())
    }

    fn bounds(&self) -> Aabb {
        match &self.shape {
            Shape::Sphere { center, radius } => {
                Aabb::new(*center - Vec3::splat(*radius), *center + Vec3::splat(*radius))
            }
            Shape::Box { min, max } => Aabb::new(*min, *max),
            Shape::Mesh { vertices, .. } => {
                let mut lo = Vec3::splat(f64::INFINITY);
                let mut hi = Vec3::splat(f64::NEG_INFINITY);
                for v in vertices {
                    lo = lo.min_components(*v);
                    hi = hi.max_components(*v);
                }
                Aabb::new(lo, hi)
            }
        }
    }
}

/// Nearest-intersection record.
#[derive(Copy, Clone, Debug)]
pub struct Hit {
    /// Distance along the ray, meters.
    pub t: f64,
    pub point: Vec3,
    /// Unit normal oriented against the incoming ray.
    pub normal: Vec3,
    pub albedo: f64,
}

/// Immutable scene: primitives, enclosing bounds, and the expected ambient
/// photon rate per bin per pixel.
#[derive(Clone, Debug)]
pub struct Scene {
    primitives: Vec<Primitive>,
    pub bounds: Aabb,
    pub ambient_rate: f64,
}

impl Scene {
    pub fn new(primitives: Vec<Primitive>, ambient_rate: f64) -> Result<Scene> {
        if primitives.is_empty() {
            return Err(Error::Argument("scene needs at least one primitive".into()));
        }
        if !(ambient_rate >= 0.0) {
            return Err(Error::Argument("ambient_rate must be >= 0".into()));
        }
        let mut bounds: Option<Aabb> = None;
        for p in &primitives {
            p.validate()?;
            let b = p.bounds();
            bounds = Some(match bounds {
                None => b,
                Some(acc) => acc.union(b),
            });
        }
        Ok(Scene {
            primitives,
            bounds: bounds.unwrap(),
            ambient_rate,
        })
    }

    pub fn primitives(&self) -> &[Primitive] {
        &self.primitives
    }

    /// Nearest intersection with t > `T_EPS`, or `None`.
    pub fn ray_intersect(&self, ray: &Ray) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        for p in &self.primitives {
            if let Some(hit) = intersect_primitive(p, ray) {
                if best.as_ref().map_or(true, |b| hit.t < b.t) {
                    best = Some(hit);
                }
            }
        }
        best
    }

    /// True iff nothing blocks the open segment (a, b). The surfaces that the
    /// endpoints lie on are excluded by the `VIS_EPS` endpoint tolerance.
    pub fn segment_visible(&self, a: Vec3, b: Vec3) -> bool {
        let d = b - a;
        let len = d.norm();
        if len < 1e-12 {
            return true;
        }
        let ray = Ray::new(a, d / len);
        for p in &self.primitives {
            if let Some(hit) = intersect_primitive(p, &ray) {
                if hit.t > VIS_EPS && hit.t < len - VIS_EPS {
                    return false;
                }
                // A nearer surface of the same primitive may sit past the
                // first hit (e.g. entering a box at the far side): check the
                // continuation when the first hit is inside the end tolerance.
                if hit.t <= VIS_EPS {
                    let origin2 = ray.at(hit.t + VIS_EPS);
                    let remaining = len - (hit.t + VIS_EPS);
                    if remaining > VIS_EPS {
                        let ray2 = Ray::new(origin2, ray.dir);
                        if let Some(h2) = intersect_primitive(p, &ray2) {
                            if h2.t > 0.0 && h2.t < remaining - VIS_EPS {
                                return false;
                            }
                        }
                    }
                }
            }
        }
        true
    }

    /// True iff the point lies inside some primitive (mesh containment uses
    /// ray-crossing parity along +x).
    pub fn contains_point(&self, p: Vec3) -> bool {
        self.primitives.iter().any(|pr| primitive_contains(pr, p))
    }

    /// `n` points drawn uniformly by surface area across all primitives.
    pub fn sample_surface(&self, n: usize, rng: &mut StreamRng) -> Vec<Vec3> {
        let areas: Vec<f64> = self.primitives.iter().map(primitive_area).collect();
        let total: f64 = areas.iter().sum();
        let mut out = Vec::with_capacity(n);
        if total <= 0.0 {
            return out;
        }
        for _ in 0..n {
            let mut pick = rng.next_f64() * total;
            let mut idx = 0;
            for (i, a) in areas.iter().enumerate() {
                if pick < *a || i == areas.len() - 1 {
                    idx = i;
                    break;
                }
                pick -= a;
            }
            out.push(sample_primitive_surface(&self.primitives[idx], rng));
        }
        out
    }
}

fn intersect_primitive(p: &Primitive, ray: &Ray) -> Option<Hit> {
    match &p.shape {
        Shape::Sphere { center, radius } => intersect_sphere(*center, *radius, ray, p.albedo),
        Shape::Box { min, max } => intersect_box(Aabb::new(*min, *max), ray, p.albedo),
        Shape::Mesh { vertices, faces } => {
            let mut best: Option<Hit> = None;
            for f in faces {
                if let Some(hit) =
                    intersect_triangle(vertices[f[0]], vertices[f[1]], vertices[f[2]], ray, p.albedo)
                {
                    if best.as_ref().map_or(true, |b| hit.t < b.t) {
                        best = Some(hit);
                    }
                }
            }
            best
        }
    }
}

fn intersect_sphere(center: Vec3, radius: f64, ray: &Ray, albedo: f64) -> Option<Hit> {
    let oc = ray.origin - center;
    let b = oc.dot(ray.dir);
    let c = oc.norm_squared() - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let t = if -b - sq > T_EPS {
        -b - sq
    } else if -b + sq > T_EPS {
        -b + sq
    } else {
        return None;
    };
    let point = ray.at(t);
    let mut normal = ((point - center) / radius).normalized()?;
    if normal.dot(ray.dir) > 0.0 {
        normal = -normal;
    }
    Some(Hit { t, point, normal, albedo })
}

fn intersect_box(b: Aabb, ray: &Ray, albedo: f64) -> Option<Hit> {
    let (t0, t1) = b.intersect_ray(ray.origin, ray.dir)?;
    let t = if t0 > T_EPS {
        t0
    } else if t1 > T_EPS {
        t1
    } else {
        return None;
    };
    let point = ray.at(t);
    // Face normal from the dominant axis of the local offset.
    let c = b.center();
    let half = b.extent() * 0.5;
    let local = point - c;
    let rel = Vec3::new(local.x / half.x, local.y / half.y, local.z / half.z);
    let (ax, sign) = {
        let a = [rel.x.abs(), rel.y.abs(), rel.z.abs()];
        let ax = if a[0] >= a[1] && a[0] >= a[2] {
            0
        } else if a[1] >= a[2] {
            1
        } else {
            2
        };
        (ax, rel.component(ax).signum())
    };
    let mut normal = match ax {
        0 => Vec3::new(sign, 0.0, 0.0),
        1 => Vec3::new(0.0, sign, 0.0),
        _ => Vec3::new(0.0, 0.0, sign),
    };
    if normal.dot(ray.dir) > 0.0 {
        normal = -normal;
    }
    Some(Hit { t, point, normal, albedo })
}

/// Moller-Trumbore. Degenerate (zero-area) triangles are skipped.
fn intersect_triangle(v0: Vec3, v1: Vec3, v2: Vec3, ray: &Ray, albedo: f64) -> Option<Hit> {
    let e1 = v1 - v0;
    let e2 = v2 - v0;
    let pvec = ray.dir.cross(e2);
    let det = e1.dot(pvec);
    if det.abs() < 1e-14 {
        return None; // parallel or degenerate
    }
    let inv_det = 1.0 / det;
    let tvec = ray.origin - v0;
    let u = tvec.dot(pvec) * inv_det;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(e1);
    let v = ray.dir.dot(qvec) * inv_det;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(qvec) * inv_det;
    if t <= T_EPS {
        return None;
    }
    let mut normal = e1.cross(e2).normalized()?;
    if normal.dot(ray.dir) > 0.0 {
        normal = -normal;
    }
    Some(Hit { t, point: ray.at(t), normal, albedo })
}

fn primitive_contains(p: &Primitive, point: Vec3) -> bool {
    match &p.shape {
        Shape::Sphere { center, radius } => point.distance(*center) <= *radius,
        Shape::Box { min, max } => Aabb::new(*min, *max).contains(point, 0.0),
        Shape::Mesh { vertices, faces } => {
            // Crossing parity along +x with a slightly tilted direction to
            // dodge edge-on hits.
            let dir = Vec3::new(1.0, 1.3e-7, 2.7e-7).normalized().unwrap();
            let ray = Ray::new(point, dir);
            let mut crossings = 0usize;
            for f in faces {
                if intersect_triangle(vertices[f[0]], vertices[f[1]], vertices[f[2]], &ray, 0.5)
                    .is_some()
                {
                    crossings += 1;
                }
            }
            crossings % 2 == 1
        }
    }
}

fn primitive_area(p: &Primitive) -> f64 {
    match &p.shape {
        Shape::Sphere { radius, .. } => 4.0 * std::f64::consts::PI * radius * radius,
        Shape::Box { min, max } => {
            let e = *max - *min;
            2.0 * (e.x * e.y + e.y * e.z + e.x * e.z)
        }
        Shape::Mesh { vertices, faces } => faces
            .iter()
            .map(|f| {
                (vertices[f[1]] - vertices[f[0]])
                    .cross(vertices[f[2]] - vertices[f[0]])
                    .norm()
                    * 0.5
            })
            .sum(),
    }
}

fn sample_primitive_surface(p: &Primitive, rng: &mut StreamRng) -> Vec3 {
    match &p.shape {
        Shape::Sphere { center, radius } => {
            // Uniform on the sphere via normalized gaussian triple.
            loop {
                let v = Vec3::new(rng.next_gaussian(), rng.next_gaussian(), rng.next_gaussian());
                if let Some(u) = v.normalized() {
                    return *center + u * *radius;
                }
            }
        }
        Shape::Box { min, max } => {
            let e = *max - *min;
            let areas = [e.y * e.z, e.y * e.z, e.x * e.z, e.x * e.z, e.x * e.y, e.x * e.y];
            let total: f64 = areas.iter().sum();
            let mut pick = rng.next_f64() * total;
            let mut face = 5;
            for (i, a) in areas.iter().enumerate() {
                if pick < *a {
                    face = i;
                    break;
                }
                pick -= a;
            }
            let u = rng.next_f64();
            let v = rng.next_f64();
            match face {
                0 => Vec3::new(min.x, min.y + u * e.y, min.z + v * e.z),
                1 => Vec3::new(max.x, min.y + u * e.y, min.z + v * e.z),
                2 => Vec3::new(min.x + u * e.x, min.y, min.z + v * e.z),
                3 => Vec3::new(min.x + u * e.x, max.y, min.z + v * e.z),
                4 => Vec3::new(min.x + u * e.x, min.y + v * e.y, min.z),
                _ => Vec3::new(min.x + u * e.x, min.y + v * e.y, max.z),
            }
        }
        Shape::Mesh { vertices, faces } => {
            let areas: Vec<f64> = faces
                .iter()
                .map(|f| {
                    (vertices[f[1]] - vertices[f[0]])
                        .cross(vertices[f[2]] - vertices[f[0]])
                        .norm()
                        * 0.5
                })
                .collect();
            let total: f64 = areas.iter().sum();
            let mut pick = rng.next_f64() * total.max(1e-300);
            let mut idx = faces.len() - 1;
            for (i, a) in areas.iter().enumerate() {
                if pick < *a {
                    idx = i;
                    break;
                }
                pick -= a;
            }
            let f = faces[idx];
            let (mut r1, r2) = (rng.next_f64(), rng.next_f64());
            r1 = r1.sqrt();
            let w0 = 1.0 - r1;
            let w1 = r1 * (1.0 - r2);
            let w2 = r1 * r2;
            vertices[f[0]] * w0 + vertices[f[1]] * w1 + vertices[f[2]] * w2
        }
    }
}

/// Pinhole camera. `fov` is the full horizontal field of view in radians;
/// square pixels, so the vertical extent follows from the aspect ratio.
/// Camera space is x right, y up, -z forward; `orientation` maps camera
/// space to world space.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CameraModel {
    pub position: Vec3,
    pub orientation: Mat3,
    pub fov: f64,
    pub nu: u32,
    pub nv: u32,
}

impl CameraModel {
    pub fn new(position: Vec3, orientation: Mat3, fov: f64, nu: u32, nv: u32) -> Result<CameraModel> {
        if !orientation.is_rotation() {
            return Err(Error::Argument("camera orientation is not a proper rotation".into()));
        }
        if !(fov > 0.0 && fov < std::f64::consts::PI) {
            return Err(Error::Argument(format!("fov {fov} outside (0, pi)")));
        }
        if nu == 0 || nv == 0 {
            return Err(Error::Argument("camera resolution must be positive".into()));
        }
        if !position.is_finite() {
            return Err(Error::Argument("camera position not finite".into()));
        }
        Ok(CameraModel { position, orientation, fov, nu, nv })
    }

    /// Orientation from a view target and an up hint.
    pub fn look_at(position: Vec3, target: Vec3, up: Vec3, fov: f64, nu: u32, nv: u32) -> Result<CameraModel> {
        let forward = (target - position)
            .normalized()
            .ok_or_else(|| Error::Argument("camera target coincides with position".into()))?;
        let right = forward
            .cross(up)
            .normalized()
            .ok_or_else(|| Error::Argument("up vector parallel to view direction".into()))?;
        let true_up = right.cross(forward);
        let orientation = Mat3::from_cols(right, true_up, -forward);
        CameraModel::new(position, orientation, fov, nu, nv)
    }

    /// Ray through the center of pixel (u, v).
    pub fn pixel_ray(&self, u: u32, v: u32) -> Result<Ray> {
        if u >= self.nu || v >= self.nv {
            return Err(Error::Argument(format!(
                "pixel ({u}, {v}) out of range {}x{}",
                self.nu, self.nv
            )));
        }
        let tan_half = (self.fov * 0.5).tan();
        let aspect = self.nv as f64 / self.nu as f64;
        let x = (2.0 * (u as f64 + 0.5) / self.nu as f64 - 1.0) * tan_half;
        let y = -(2.0 * (v as f64 + 0.5) / self.nv as f64 - 1.0) * tan_half * aspect;
        let dir_cam = Vec3::new(x, y, -1.0).normalized().unwrap();
        Ok(Ray::new(self.position, self.orientation.mul_vec(dir_cam)))
    }

    /// Same optics at reduced resolution (block binning keeps the fov).
    pub fn downsampled(&self, factor: u32) -> Result<CameraModel> {
        if factor == 0 || self.nu % factor != 0 || self.nv % factor != 0 {
            return Err(Error::Argument(format!(
                "factor {factor} does not divide {}x{}",
                self.nu, self.nv
            )));
        }
        CameraModel::new(self.position, self.orientation, self.fov, self.nu / factor, self.nv / factor)
    }

    pub fn pixel_count(&self) -> usize {
        self.nu as usize * self.nv as usize
    }
}

/// A laser target resolved onto the scene surface.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ResolvedSpot {
    pub point: Vec3,
    pub normal: Vec3,
    pub albedo: f64,
}

/// How the illumination plan is specified before resolution.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IlluminationPlan {
    /// Explicit surface points; each is verified by casting a laser ray at it.
    Targets(Vec<Vec3>),
    /// Laser directions; targets are the first intersections.
    Directions(Vec<Vec3>),
    /// Camera pixels; targets are the first intersections of those pixel
    /// rays, so the spot always coincides with a pixel line of sight.
    Pixels(Vec<[u32; 2]>),
}

/// Sensor pose, laser position, and the resolved illumination spots.
#[derive(Clone, Debug)]
pub struct LidarRig {
    pub camera: CameraModel,
    pub laser_position: Vec3,
    spots: Vec<ResolvedSpot>,
}

impl LidarRig {
    pub fn resolve(camera: CameraModel, laser_position: Vec3, plan: &IlluminationPlan, scene: &Scene) -> Result<LidarRig> {
        let spots = match plan {
            IlluminationPlan::Targets(targets) => {
                let mut out = Vec::with_capacity(targets.len());
                for (i, target) in targets.iter().enumerate() {
                    let dir = (*target - laser_position)
                        .normalized()
                        .ok_or_else(|| Error::Argument(format!("target {i} coincides with the laser")))?;
                    let hit = scene
                        .ray_intersect(&Ray::new(laser_position, dir))
                        .ok_or_else(|| Error::Data(format!("target {i} misses every surface")))?;
                    if hit.point.distance(*target) > 1e-4 {
                        return Err(Error::Data(format!(
                            "target {i} is not the first surface along the laser ray (off by {:.3} m)",
                            hit.point.distance(*target)
                        )));
                    }
                    out.push(ResolvedSpot { point: hit.point, normal: hit.normal, albedo: hit.albedo });
                }
                out
            }
            IlluminationPlan::Directions(dirs) => {
                let mut out = Vec::with_capacity(dirs.len());
                for (i, d) in dirs.iter().enumerate() {
                    let dir = d
                        .normalized()
                        .ok_or_else(|| Error::Argument(format!("laser direction {i} is zero")))?;
                    let hit = scene
                        .ray_intersect(&Ray::new(laser_position, dir))
                        .ok_or_else(|| Error::Data(format!("laser direction {i} misses every surface")))?;
                    out.push(ResolvedSpot { point: hit.point, normal: hit.normal, albedo: hit.albedo });
                }
                out
            }
            IlluminationPlan::Pixels(pixels) => {
                let mut out = Vec::with_capacity(pixels.len());
                for (i, &[u, v]) in pixels.iter().enumerate() {
                    let ray = camera.pixel_ray(u, v)?;
                    let hit = scene
                        .ray_intersect(&ray)
                        .ok_or_else(|| Error::Data(format!("illumination pixel {i} sees no surface")))?;
                    out.push(ResolvedSpot { point: hit.point, normal: hit.normal, albedo: hit.albedo });
                }
                out
            }
        };
        if spots.is_empty() {
            return Err(Error::Argument("illumination plan needs at least one spot".into()));
        }
        Ok(LidarRig { camera, laser_position, spots })
    }

    /// Rig from calibration data alone: camera, laser, and known spot
    /// positions. Spot normals are not observable from calibration; they
    /// default to facing the laser (consumers of calibration rigs -- signal
    /// extraction and training -- only use the positions).
    pub fn from_calibration(camera: CameraModel, laser_position: Vec3, spot_points: Vec<Vec3>) -> Result<LidarRig> {
        if spot_points.is_empty() {
            return Err(Error::Argument("calibration rig needs at least one spot".into()));
        }
        let spots = spot_points
            .into_iter()
            .map(|point| {
                let normal = (laser_position - point)
                    .normalized()
                    .unwrap_or(Vec3::new(0.0, 0.0, 1.0));
                ResolvedSpot { point, normal, albedo: 1.0 }
            })
            .collect();
        Ok(LidarRig { camera, laser_position, spots })
    }

    pub fn spots(&self) -> &[ResolvedSpot] {
        &self.spots
    }

    pub fn spot(&self, k: usize) -> Result<&ResolvedSpot> {
        self.spots
            .get(k)
            .ok_or_else(|| Error::Argument(format!("illumination index {k} out of range {}", self.spots.len())))
    }

    pub fn spot_count(&self) -> usize {
        self.spots.len()
    }

    /// Rig restricted to the first `n` illumination spots.
    pub fn with_spot_prefix(&self, n: usize) -> Result<LidarRig> {
        if n == 0 || n > self.spots.len() {
            return Err(Error::Argument(format!("cannot keep {n} of {} spots", self.spots.len())));
        }
        Ok(LidarRig {
            camera: self.camera.clone(),
            laser_position: self.laser_position,
            spots: self.spots[..n].to_vec(),
        })
    }

    /// Rig with the camera swapped (same laser and spots).
    pub fn with_camera(&self, camera: CameraModel) -> LidarRig {
        LidarRig { camera, laser_position: self.laser_position, spots: self.spots.clone() }
    }
}

// ---------------------------------------------------------------------------
// Scene description file
// ---------------------------------------------------------------------------

/// Camera block of the scene file. `fov_deg` is the horizontal field of view.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CameraSpec {
    pub position: [f64; 3],
    pub look_at: [f64; 3],
    pub up: [f64; 3],
    pub fov_deg: f64,
    pub resolution: [u32; 2],
}

/// On-disk scene description. All lengths in meters.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SceneFile {
    pub primitives: Vec<Primitive>,
    pub ambient_rate: f64,
    pub camera: CameraSpec,
    pub laser_position: [f64; 3],
    pub illumination: IlluminationPlan,
}

impl SceneFile {
    pub fn from_json(text: &str) -> Result<SceneFile> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("scene file: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serialization cannot fail")
    }

    /// Validate and resolve into runtime objects.
    pub fn build(&self) -> Result<(Scene, LidarRig)> {
        let scene = Scene::new(self.primitives.clone(), self.ambient_rate)?;
        let cam = CameraModel::look_at(
            Vec3::from_array(self.camera.position),
            Vec3::from_array(self.camera.look_at),
            Vec3::from_array(self.camera.up),
            self.camera.fov_deg.to_radians(),
            self.camera.resolution[0],
            self.camera.resolution[1],
        )?;
        let rig = LidarRig::resolve(cam, Vec3::from_array(self.laser_position), &self.illumination, &scene)?;
        Ok((scene, rig))
    }
}
