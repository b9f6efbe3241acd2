//! Built-in demo scenes.
//!
//! The desk-scale reference: a 4 m room seen from inside, a floating box
//! occluder in front of the back wall, a colocated sensor/laser pair, and 16
//! illumination spots on the left and right walls (aimed through edge pixels
//! so each capture contains its one-bounce return exactly). Spots sit nearer
//! the camera than the box, so the box casts shadows onto wall regions the
//! camera actually sees.

use crate::math::{Aabb, Vec3};
use crate::scene::{CameraSpec, IlluminationPlan, Primitive, SceneFile, Shape};

/// Interior half-extent of the reference room (4 m across).
pub const ROOM_HALF: f64 = 2.0;
/// Wall slab thickness.
pub const WALL_THICKNESS: f64 = 0.2;

fn wall(min: [f64; 3], max: [f64; 3], albedo: f64) -> Primitive {
    Primitive {
        shape: Shape::Box {
            min: Vec3::new(min[0], min[1], min[2]),
            max: Vec3::new(max[0], max[1], max[2]),
        },
        albedo,
    }
}

/// Axis-aligned bounds of the occluder box.
pub fn occluder_bounds() -> Aabb {
    Aabb::new(Vec3::new(-0.05, -0.65, -1.8), Vec3::new(0.65, 0.25, -1.3))
}

/// Evaluation region around the occluder: its bounds dilated by two voxels
/// of the default grid, clamped to the room interior so the wall slabs stay
/// out of an object-focused occupancy metric.
pub fn occluder_region() -> Aabb {
    let d = occluder_bounds().dilated(0.10);
    let h = ROOM_HALF - 0.05;
    Aabb::new(
        d.min.max_components(Vec3::splat(-h)),
        d.max.min_components(Vec3::splat(h)),
    )
}

/// The desk-scale reference scene.
pub fn desk_scene_file() -> SceneFile {
    let h = ROOM_HALF;
    let t = WALL_THICKNESS;
    let wall_albedo = 0.8;
    let occ = occluder_bounds();
    let primitives = vec![
        // Back wall (faces the camera).
        wall([-h - t, -h - t, -h - t], [h + t, h + t, -h], wall_albedo),
        // Left and right walls.
        wall([-h - t, -h - t, -h], [-h, h + t, h + t], wall_albedo),
        wall([h, -h - t, -h], [h + t, h + t, h + t], wall_albedo),
        // Floor and ceiling.
        wall([-h, -h - t, -h], [h, -h, h + t], wall_albedo),
        wall([-h, h, -h], [h, h + t, h + t], wall_albedo),
        // Front wall behind the camera.
        wall([-h, -h, h], [h, h, h + t], wall_albedo),
        // Floating box occluder.
        Primitive {
            shape: Shape::Box { min: occ.min, max: occ.max },
            albedo: 0.7,
        },
    ];

    // 16 spots through edge pixels: u in {1,3,5,7} lands on the left wall,
    // {56,58,60,62} on the right wall; v in {20,44} spreads them vertically.
    let mut pixels = Vec::new();
    for &u in &[1u32, 3, 5, 7] {
        for &v in &[20u32, 44] {
            pixels.push([u, v]);
        }
    }
    for &u in &[62u32, 60, 58, 56] {
        for &v in &[20u32, 44] {
            pixels.push([u, v]);
        }
    }

    SceneFile {
        primitives,
        ambient_rate: 0.0,
        camera: CameraSpec {
            position: [0.0, 0.0, 1.7],
            look_at: [0.0, 0.0, 0.0],
            up: [0.0, 1.0, 0.0],
            fov_deg: 75.0,
            resolution: [64, 64],
        },
        laser_position: [0.005, 0.005, 1.7],
        illumination: IlluminationPlan::Pixels(pixels),
    }
}
