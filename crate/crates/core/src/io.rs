//! On-disk formats.
//!
//! Binary containers share one layout: an 8-byte ASCII magic, a u32 (little
//! endian) JSON header length, the UTF-8 JSON header, then raw little-endian
//! payload arrays. Per-pixel rasters are u-major (`index = u * nv + v`),
//! matching the in-memory layout; boolean masks are bit-packed LSB-first in
//! that same order.

use crate::eval::DepthImage;
use crate::field::DensityGrid;
use crate::math::{Aabb, Vec3};
use crate::recon::HistoryRow;
use crate::scene::CameraModel;
use crate::signal::PreprocessedView;
use crate::transient::{TransientImage, ViewTruth};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

pub const TRANSIENT_MAGIC: &[u8; 8] = b"PLTNTR01";
pub const GRID_MAGIC: &[u8; 8] = b"PLTNGR01";
pub const TRUTH_MAGIC: &[u8; 8] = b"PLTNGT01";
pub const PREPROCESSED_MAGIC: &[u8; 8] = b"PLTNPP01";

fn write_container(path: &Path, magic: &[u8; 8], header_json: &str, payload: &[&[u8]]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(magic)?;
    let hb = header_json.as_bytes();
    w.write_all(&(hb.len() as u32).to_le_bytes())?;
    w.write_all(hb)?;
    for p in payload {
        w.write_all(p)?;
    }
    w.flush()?;
    Ok(())
}

fn read_container(path: &Path, magic: &[u8; 8]) -> Result<(String, Vec<u8>)> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut r = std::io::BufReader::new(file);
    let mut got = [0u8; 8];
    r.read_exact(&mut got)?;
    if &got != magic {
        return Err(Error::Data(format!(
            "{}: bad magic {:?}, expected {:?}",
            path.display(),
            String::from_utf8_lossy(&got),
            String::from_utf8_lossy(magic)
        )));
    }
    let mut len_bytes = [0u8; 4];
    r.read_exact(&mut len_bytes)?;
    let len = u32::from_le_bytes(len_bytes) as usize;
    let mut header = vec![0u8; len];
    r.read_exact(&mut header)?;
    let header = String::from_utf8(header).map_err(|e| Error::Data(format!("header not UTF-8: {e}")))?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    Ok((header, rest))
}

fn f32s_to_bytes(xs: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(xs.len() * 4);
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

fn bytes_to_f32s(bytes: &[u8], expect: usize, what: &str) -> Result<Vec<f32>> {
    if bytes.len() < expect * 4 {
        return Err(Error::Data(format!(
            "{what}: expected {} bytes of floats, found {}",
            expect * 4,
            bytes.len()
        )));
    }
    Ok(bytes[..expect * 4]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn pack_bits(mask: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; mask.len().div_ceil(8)];
    for (i, &b) in mask.iter().enumerate() {
        if b {
            out[i / 8] |= 1 << (i % 8);
        }
    }
    out
}

fn unpack_bits(bytes: &[u8], n: usize, what: &str) -> Result<Vec<bool>> {
    if bytes.len() < n.div_ceil(8) {
        return Err(Error::Data(format!("{what}: mask truncated")));
    }
    Ok((0..n).map(|i| bytes[i / 8] & (1 << (i % 8)) != 0).collect())
}

// ---------------------------------------------------------------------------
// Transient files
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct TransientHeader {
    n_u: u32,
    n_v: u32,
    n_t: u32,
    t_res: f64,
    t_start: f64,
    k: u32,
    /// Resolved spot position for this capture.
    l: [f64; 3],
    /// Laser position.
    x_l: [f64; 3],
    camera: CameraModel,
    flags: Vec<String>,
    dropped_tail_bins: u32,
}

pub fn write_transient(
    path: &Path,
    img: &TransientImage,
    camera: &CameraModel,
    laser_position: Vec3,
    l: Vec3,
    flags: &[String],
) -> Result<()> {
    let header = TransientHeader {
        n_u: img.nu,
        n_v: img.nv,
        n_t: img.nt,
        t_res: img.t_res,
        t_start: img.t_start,
        k: img.k,
        l: l.to_array(),
        x_l: laser_position.to_array(),
        camera: camera.clone(),
        flags: flags.to_vec(),
        dropped_tail_bins: img.dropped_tail_bins,
    };
    let json = serde_json::to_string(&header).map_err(|e| Error::Data(e.to_string()))?;
    write_container(path, TRANSIENT_MAGIC, &json, &[&f32s_to_bytes(&img.data)])
}

#[derive(Debug)]
pub struct TransientFile {
    pub image: TransientImage,
    pub camera: CameraModel,
    pub laser_position: Vec3,
    pub l: Vec3,
    pub flags: Vec<String>,
}

pub fn read_transient(path: &Path) -> Result<TransientFile> {
    let (json, payload) = read_container(path, TRANSIENT_MAGIC)?;
    let h: TransientHeader = serde_json::from_str(&json).map_err(|e| Error::Data(format!("transient header: {e}")))?;
    let count = h.n_u as usize * h.n_v as usize * h.n_t as usize;
    let data = bytes_to_f32s(&payload, count, "transient data")?;
    let mut image = TransientImage::zeroed(h.n_u, h.n_v, h.n_t, h.t_res, h.t_start, h.k)?;
    image.data = data;
    image.dropped_tail_bins = h.dropped_tail_bins;
    Ok(TransientFile {
        image,
        camera: h.camera,
        laser_position: Vec3::from_array(h.x_l),
        l: Vec3::from_array(h.l),
        flags: h.flags,
    })
}

// ---------------------------------------------------------------------------
// Ground-truth files
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct TruthHeader {
    n_u: u32,
    n_v: u32,
    k: u32,
    l: [f64; 3],
    d1: f64,
    t_one_bounce: f64,
}

pub fn write_truth(path: &Path, truth: &ViewTruth) -> Result<()> {
    let header = TruthHeader {
        n_u: truth.nu,
        n_v: truth.nv,
        k: truth.k,
        l: truth.l.to_array(),
        d1: truth.d1,
        t_one_bounce: truth.t_one_bounce,
    };
    let json = serde_json::to_string(&header).map_err(|e| Error::Data(e.to_string()))?;
    let depth: Vec<f32> = truth.depth.iter().map(|&d| d as f32).collect();
    write_container(
        path,
        TRUTH_MAGIC,
        &json,
        &[
            &f32s_to_bytes(&depth),
            &pack_bits(&truth.visible),
            &pack_bits(&truth.observed),
            &pack_bits(&truth.direct),
        ],
    )
}

pub fn read_truth(path: &Path) -> Result<ViewTruth> {
    let (json, payload) = read_container(path, TRUTH_MAGIC)?;
    let h: TruthHeader = serde_json::from_str(&json).map_err(|e| Error::Data(format!("truth header: {e}")))?;
    let n = h.n_u as usize * h.n_v as usize;
    let depth_bytes = 4 * n;
    let mask_bytes = n.div_ceil(8);
    let depth = bytes_to_f32s(&payload, n, "truth depth")?;
    let off1 = depth_bytes;
    let off2 = off1 + mask_bytes;
    let off3 = off2 + mask_bytes;
    if payload.len() < off3 + mask_bytes {
        return Err(Error::Data("truth file truncated".into()));
    }
    Ok(ViewTruth {
        k: h.k,
        nu: h.n_u,
        nv: h.n_v,
        l: Vec3::from_array(h.l),
        d1: h.d1,
        t_one_bounce: h.t_one_bounce,
        depth: depth.iter().map(|&d| d as f64).collect(),
        visible: unpack_bits(&payload[off1..off2], n, "visible mask")?,
        observed: unpack_bits(&payload[off2..off3], n, "observed mask")?,
        direct: unpack_bits(&payload[off3..], n, "direct mask")?,
    })
}

// ---------------------------------------------------------------------------
// Preprocessed views
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct PreprocessedHeader {
    n_u: u32,
    n_v: u32,
    k: u32,
    l: [f64; 3],
    d1: f64,
    tau: f64,
}

pub fn write_preprocessed(path: &Path, view: &PreprocessedView) -> Result<()> {
    let header = PreprocessedHeader {
        n_u: view.nu,
        n_v: view.nv,
        k: view.k,
        l: view.l.to_array(),
        d1: view.d1,
        tau: view.tau,
    };
    let json = serde_json::to_string(&header).map_err(|e| Error::Data(e.to_string()))?;
    let tof: Vec<f32> = view.tof.iter().map(|&t| t as f32).collect();
    let conf: Vec<f32> = view.confidence.iter().map(|&c| c as f32).collect();
    write_container(
        path,
        PREPROCESSED_MAGIC,
        &json,
        &[
            &f32s_to_bytes(&tof),
            &f32s_to_bytes(&conf),
            &pack_bits(&view.lit),
            &pack_bits(&view.excluded),
        ],
    )
}

pub fn read_preprocessed(path: &Path) -> Result<PreprocessedView> {
    let (json, payload) = read_container(path, PREPROCESSED_MAGIC)?;
    let h: PreprocessedHeader =
        serde_json::from_str(&json).map_err(|e| Error::Data(format!("preprocessed header: {e}")))?;
    let n = h.n_u as usize * h.n_v as usize;
    let mask_bytes = n.div_ceil(8);
    let tof = bytes_to_f32s(&payload, n, "tof raster")?;
    let off1 = 4 * n;
    let conf = bytes_to_f32s(&payload[off1..], n, "confidence raster")?;
    let off2 = off1 + 4 * n;
    let off3 = off2 + mask_bytes;
    if payload.len() < off3 + mask_bytes {
        return Err(Error::Data("preprocessed file truncated".into()));
    }
    Ok(PreprocessedView {
        nu: h.n_u,
        nv: h.n_v,
        k: h.k,
        l: Vec3::from_array(h.l),
        d1: h.d1,
        tau: h.tau,
        tof: tof.iter().map(|&t| t as f64).collect(),
        confidence: conf.iter().map(|&c| c as f64).collect(),
        lit: unpack_bits(&payload[off2..off3], n, "lit mask")?,
        excluded: unpack_bits(&payload[off3..], n, "excluded mask")?,
    })
}

// ---------------------------------------------------------------------------
// Density-grid checkpoints
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct GridHeader {
    resolution: [usize; 3],
    bounds_min: [f64; 3],
    bounds_max: [f64; 3],
}

/// Checkpoint: raw parameters as little-endian f32 in x-major order.
pub fn write_grid(path: &Path, grid: &DensityGrid) -> Result<()> {
    let header = GridHeader {
        resolution: grid.resolution(),
        bounds_min: grid.bounds().min.to_array(),
        bounds_max: grid.bounds().max.to_array(),
    };
    let json = serde_json::to_string(&header).map_err(|e| Error::Data(e.to_string()))?;
    let raw: Vec<f32> = grid.raw().iter().map(|&t| t as f32).collect();
    write_container(path, GRID_MAGIC, &json, &[&f32s_to_bytes(&raw)])
}

pub fn read_grid(path: &Path) -> Result<DensityGrid> {
    let (json, payload) = read_container(path, GRID_MAGIC)?;
    let h: GridHeader = serde_json::from_str(&json).map_err(|e| Error::Data(format!("grid header: {e}")))?;
    let count = h.resolution[0] * h.resolution[1] * h.resolution[2];
    let raw = bytes_to_f32s(&payload, count, "grid parameters")?;
    DensityGrid::from_raw(
        h.resolution,
        Aabb::new(Vec3::from_array(h.bounds_min), Vec3::from_array(h.bounds_max)),
        raw.iter().map(|&t| t as f64).collect(),
    )
}

// ---------------------------------------------------------------------------
// Dataset manifest
// ---------------------------------------------------------------------------

/// One illumination capture in the manifest (paths relative to the manifest).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub k: u32,
    pub transient: String,
    pub truth: String,
    pub l: [f64; 3],
    pub d1: f64,
}

/// Index of a simulated dataset.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub camera: CameraModel,
    pub laser_position: [f64; 3],
    pub n_t: u32,
    pub t_res: f64,
    pub t_start: f64,
    pub pulse_fwhm: f64,
    pub pulse_amplitude: f64,
    pub ambient_rate: f64,
    pub poisson_sampling: bool,
    pub seed: u64,
    pub views: Vec<ManifestEntry>,
}

pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    let json = serde_json::to_string_pretty(manifest).map_err(|e| Error::Data(e.to_string()))?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("manifest: {e}")))
}

// ---------------------------------------------------------------------------
// Depth rasters and previews
// ---------------------------------------------------------------------------

/// Raw raster: nu * nv little-endian f32, u-major, NaN on invalid pixels.
pub fn write_depth_raster(path: &Path, img: &DepthImage) -> Result<()> {
    let vals: Vec<f32> = img
        .values
        .iter()
        .zip(img.valid.iter())
        .map(|(&v, &ok)| if ok { v as f32 } else { f32::NAN })
        .collect();
    std::fs::write(path, f32s_to_bytes(&vals))?;
    Ok(())
}

pub fn read_depth_raster(path: &Path, nu: u32, nv: u32) -> Result<DepthImage> {
    let bytes = std::fs::read(path)?;
    let n = nu as usize * nv as usize;
    let vals = bytes_to_f32s(&bytes, n, "depth raster")?;
    let mut img = DepthImage::new(nu, nv);
    for (i, v) in vals.into_iter().enumerate() {
        if v.is_finite() {
            img.values[i] = v as f64;
            img.valid[i] = true;
        }
    }
    Ok(img)
}

/// Turbo-style colormap (quintic polynomial fit), t in [0, 1].
pub fn turbo_color(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0);
    let r = 0.13572138 + t * (4.61539260 + t * (-42.66032258 + t * (132.13108234 + t * (-152.94239396 + t * 59.28637943))));
    let g = 0.09140261 + t * (2.19418839 + t * (4.84296658 + t * (-14.18503333 + t * (4.27729857 + t * 2.82956604))));
    let b = 0.10667330 + t * (12.64194608 + t * (-60.58204836 + t * (110.36276771 + t * (-89.90310912 + t * 27.34824973))));
    [
        (r * 255.0).round().clamp(0.0, 255.0) as u8,
        (g * 255.0).round().clamp(0.0, 255.0) as u8,
        (b * 255.0).round().clamp(0.0, 255.0) as u8,
    ]
}

/// 8-bit PNG preview with the turbo colormap; invalid pixels are black.
/// The raw raster is the source of truth, the preview is for inspection.
pub fn write_depth_png(path: &Path, img: &DepthImage) -> Result<()> {
    let (w, h) = (img.nu as usize, img.nv as usize);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (v, &ok) in img.values.iter().zip(img.valid.iter()) {
        if ok {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut rgb = vec![0u8; w * h * 3];
    for u in 0..w {
        for v in 0..h {
            let i = u * h + v;
            if img.valid[i] {
                let c = turbo_color((img.values[i] - lo) / span);
                let o = (v * w + u) * 3;
                rgb[o..o + 3].copy_from_slice(&c);
            }
        }
    }
    let file = std::fs::File::create(path)?;
    let mut enc = png::Encoder::new(std::io::BufWriter::new(file), w as u32, h as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| Error::Data(format!("png: {e}")))?;
    writer
        .write_image_data(&rgb)
        .map_err(|e| Error::Data(format!("png: {e}")))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Loss history and pose lists
// ---------------------------------------------------------------------------

pub fn write_loss_csv(path: &Path, history: &[HistoryRow]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "iteration,l_primary,l_secondary,total,lr")?;
    for row in history {
        writeln!(w, "{},{},{},{},{}", row.iter, row.l_primary, row.l_secondary, row.total, row.lr)?;
    }
    Ok(())
}

pub fn write_poses(path: &Path, poses: &[CameraModel]) -> Result<()> {
    let json = serde_json::to_string_pretty(poses).map_err(|e| Error::Data(e.to_string()))?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn read_poses(path: &Path) -> Result<Vec<CameraModel>> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("poses: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Mat3;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("twobounce_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    fn small_camera() -> CameraModel {
        CameraModel::new(Vec3::new(0.1, -0.2, 1.5), Mat3::identity(), 1.1, 5, 3).unwrap()
    }

    #[test]
    fn transient_round_trip_bit_exact() {
        let mut img = TransientImage::zeroed(5, 3, 7, 128e-12, 1e-9, 2).unwrap();
        for (i, slot) in img.data.iter_mut().enumerate() {
            *slot = (i as f32).sin();
        }
        img.dropped_tail_bins = 3;
        let path = tmp("t.tr");
        write_transient(&path, &img, &small_camera(), Vec3::new(0.0, 0.0, 0.01), Vec3::new(1.0, 2.0, 3.0), &["noiseless".into()]).unwrap();
        let loaded = read_transient(&path).unwrap();
        assert_eq!(loaded.image.data, img.data);
        assert_eq!(loaded.image.nt, 7);
        assert_eq!(loaded.image.dropped_tail_bins, 3);
        assert_eq!(loaded.l, Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(loaded.flags, vec!["noiseless".to_string()]);
        // Same write twice -> identical bytes.
        let path2 = tmp("t2.tr");
        write_transient(&path2, &img, &small_camera(), Vec3::new(0.0, 0.0, 0.01), Vec3::new(1.0, 2.0, 3.0), &["noiseless".into()]).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn bad_magic_is_a_data_error() {
        let path = tmp("bad.tr");
        std::fs::write(&path, b"NOTMAGIC\x00\x00\x00\x00").unwrap();
        match read_transient(&path) {
            Err(Error::Data(msg)) => assert!(msg.contains("magic")),
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn truth_round_trip() {
        let n = 15usize; // not a multiple of 8: exercises mask padding
        let truth = ViewTruth {
            k: 1,
            nu: 5,
            nv: 3,
            l: Vec3::new(0.5, 0.25, 2.0),
            d1: 2.25,
            t_one_bounce: 15e-9,
            depth: (0..n).map(|i| if i % 4 == 0 { f64::NAN } else { i as f64 * 0.1 }).collect(),
            visible: (0..n).map(|i| i % 2 == 0).collect(),
            observed: (0..n).map(|i| i % 3 == 0).collect(),
            direct: (0..n).map(|i| i == 7).collect(),
        };
        let path = tmp("g.gt");
        write_truth(&path, &truth).unwrap();
        let got = read_truth(&path).unwrap();
        assert_eq!(got.visible, truth.visible);
        assert_eq!(got.observed, truth.observed);
        assert_eq!(got.direct, truth.direct);
        assert!(got.depth[0].is_nan());
        assert!((got.depth[1] - 0.1).abs() < 1e-7);
        assert_eq!(got.k, 1);
    }

    #[test]
    fn preprocessed_round_trip() {
        let n = 12usize;
        let view = PreprocessedView {
            nu: 4,
            nv: 3,
            k: 5,
            l: Vec3::new(-1.0, 0.5, 2.0),
            d1: 3.5,
            tau: 0.15,
            tof: (0..n).map(|i| if i % 2 == 0 { i as f64 * 1e-9 } else { f64::NAN }).collect(),
            confidence: (0..n).map(|i| i as f64 / 12.0).collect(),
            lit: (0..n).map(|i| i % 2 == 0).collect(),
            excluded: (0..n).map(|i| i == 3).collect(),
        };
        let path = tmp("v.pp");
        write_preprocessed(&path, &view).unwrap();
        let got = read_preprocessed(&path).unwrap();
        assert_eq!(got.lit, view.lit);
        assert_eq!(got.excluded, view.excluded);
        assert!((got.d1 - 3.5).abs() < 1e-15);
        assert!((got.tof[2] - 2e-9).abs() < 1e-15);
        assert!(got.tof[1].is_nan());
    }

    #[test]
    fn grid_round_trip() {
        let bounds = Aabb::new(Vec3::splat(-1.0), Vec3::splat(1.0));
        let mut grid = DensityGrid::new([3, 4, 5], bounds, 0.01).unwrap();
        for (i, t) in grid.raw_mut().iter_mut().enumerate() {
            *t = i as f64 * 0.125 - 2.0; // exact in f32
        }
        let path = tmp("g.grid");
        write_grid(&path, &grid).unwrap();
        let got = read_grid(&path).unwrap();
        assert_eq!(got.resolution(), [3, 4, 5]);
        assert_eq!(got.bounds(), bounds);
        assert_eq!(got.raw(), grid.raw());
    }

    #[test]
    fn depth_raster_and_png() {
        let mut img = DepthImage::new(6, 4);
        for i in 0..img.pixel_count() {
            if i != 5 {
                img.values[i] = 1.0 + i as f64 * 0.05;
                img.valid[i] = true;
            }
        }
        let raster = tmp("d.f32");
        write_depth_raster(&raster, &img).unwrap();
        let got = read_depth_raster(&raster, 6, 4).unwrap();
        assert_eq!(got.valid, img.valid);
        assert!((got.values[0] - 1.0).abs() < 1e-7);

        let png_path = tmp("d.png");
        write_depth_png(&png_path, &img).unwrap();
        let bytes = std::fs::read(&png_path).unwrap();
        assert_eq!(&bytes[1..4], b"PNG");
    }

    #[test]
    fn manifest_round_trip() {
        let manifest = DatasetManifest {
            camera: small_camera(),
            laser_position: [0.0, 0.0, 0.01],
            n_t: 391,
            t_res: 128e-12,
            t_start: 0.0,
            pulse_fwhm: 128e-12,
            pulse_amplitude: 1000.0,
            ambient_rate: 0.0,
            poisson_sampling: false,
            seed: 7,
            views: vec![ManifestEntry {
                k: 0,
                transient: "transients/view_000.tr".into(),
                truth: "truth/view_000.gt".into(),
                l: [1.0, 2.0, 3.0],
                d1: 2.5,
            }],
        };
        let path = tmp("m.json");
        write_manifest(&path, &manifest).unwrap();
        let got = read_manifest(&path).unwrap();
        assert_eq!(got.views.len(), 1);
        assert_eq!(got.n_t, 391);
        assert_eq!(got.views[0].transient, "transients/view_000.tr");
    }

    #[test]
    fn turbo_colormap_shape() {
        let lo = turbo_color(0.0);
        let mid = turbo_color(0.5);
        let hi = turbo_color(1.0);
        assert_ne!(lo, mid);
        assert_ne!(mid, hi);
        // Green-dominant midpoint, red-dominant high end.
        assert!(mid[1] > mid[0] && mid[1] > mid[2]);
        assert!(hi[0] > hi[1] && hi[0] > hi[2]);
    }
}
