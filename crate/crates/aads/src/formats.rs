//! On-disk formats: DRF1 depth rasters, camera JSON, PNG/PPM images, and
//! 16-bit label/mask PNGs.
//!
//! DRF1 layout: a magic line `DRF1 <w> <h>\n` followed by `w*h`
//! little-endian 32-bit floats in row-major order, NaN = invalid pixel.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::{CameraIntrinsics, Pose};
use crate::error::{Error, Result};
use crate::raster::{ImageRaster, LabelRaster, Raster};
use crate::raster::DepthMap;

// ---------------------------------------------------------------------------
// depth rasters

pub fn write_depth(path: &Path, depth: &DepthMap) -> Result<()> {
    let mut out = Vec::with_capacity(32 + depth.len() * 4);
    out.extend_from_slice(format!("DRF1 {} {}\n", depth.width(), depth.height()).as_bytes());
    for d in depth.data() {
        out.extend_from_slice(&(*d as f32).to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_depth(path: &Path) -> Result<DepthMap> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut magic = String::new();
    reader
        .read_line(&mut magic)
        .map_err(|e| Error::io(path, e))?;
    let parts: Vec<&str> = magic.trim_end().split(' ').collect();
    if parts.len() != 3 || parts[0] != "DRF1" {
        return Err(Error::parse(path, "expected magic line 'DRF1 <w> <h>'"));
    }
    let width: usize = parts[1]
        .parse()
        .map_err(|_| Error::parse(path, "bad width"))?;
    let height: usize = parts[2]
        .parse()
        .map_err(|_| Error::parse(path, "bad height"))?;
    let mut bytes = Vec::new();
    reader
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() != width * height * 4 {
        return Err(Error::parse(
            path,
            format!(
                "payload is {} bytes, expected {}",
                bytes.len(),
                width * height * 4
            ),
        ));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Raster::from_vec(width, height, data)
}

// ---------------------------------------------------------------------------
// camera files

/// JSON wire form of intrinsics + pose, rotation row-major.
#[derive(Debug, Serialize, Deserialize)]
struct CameraFile {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
    rotation: [f64; 9],
    translation: [f64; 3],
}

/// Intrinsics plus pose of one view.
#[derive(Debug, Clone, Copy)]
pub struct ViewCamera {
    pub intrinsics: CameraIntrinsics,
    pub pose: Pose,
}

pub fn write_camera(path: &Path, camera: &ViewCamera) -> Result<()> {
    let r = camera.pose.rotation();
    let t = camera.pose.center();
    let file = CameraFile {
        fx: camera.intrinsics.fx,
        fy: camera.intrinsics.fy,
        cx: camera.intrinsics.cx,
        cy: camera.intrinsics.cy,
        width: camera.intrinsics.width,
        height: camera.intrinsics.height,
        rotation: [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
        ],
        translation: [t.x, t.y, t.z],
    };
    let json = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::parse(path, e.to_string()))?;
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_camera(path: &Path) -> Result<ViewCamera> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: CameraFile =
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
    let intrinsics = CameraIntrinsics::new(
        file.fx,
        file.fy,
        file.cx,
        file.cy,
        file.width,
        file.height,
    )?;
    let r = file.rotation;
    let rotation = Matrix3::new(r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7], r[8]);
    let translation = Vector3::new(file.translation[0], file.translation[1], file.translation[2]);
    let pose = Pose::new(rotation, translation)
        .map_err(|e| Error::parse(path, format!("bad pose: {e}")))?;
    Ok(ViewCamera { intrinsics, pose })
}

// ---------------------------------------------------------------------------
// images

fn to_rgb8(value: f64) -> u8 {
    (value.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes PNG or PPM (P6, maxval 255) depending on the file extension.
pub fn write_image(path: &Path, image: &ImageRaster) -> Result<()> {
    let w = image.width();
    let h = image.height();
    let mut buf = Vec::with_capacity(w * h * 3);
    for px in image.data() {
        buf.push(to_rgb8(px[0]));
        buf.push(to_rgb8(px[1]));
        buf.push(to_rgb8(px[2]));
    }
    if path.extension().and_then(|e| e.to_str()) == Some("ppm") {
        let mut out = Vec::with_capacity(buf.len() + 32);
        out.extend_from_slice(format!("P6\n{w} {h}\n255\n").as_bytes());
        out.extend_from_slice(&buf);
        return fs::write(path, out).map_err(|e| Error::io(path, e));
    }
    let img = image::RgbImage::from_raw(w as u32, h as u32, buf)
        .expect("buffer length matches dimensions");
    img.save(path)
        .map_err(|e| Error::parse(path, e.to_string()))
}

pub fn read_image(path: &Path) -> Result<ImageRaster> {
    let img = image::open(path)
        .map_err(|e| Error::parse(path, e.to_string()))?
        .into_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img
        .pixels()
        .map(|p| {
            [
                p.0[0] as f64 / 255.0,
                p.0[1] as f64 / 255.0,
                p.0[2] as f64 / 255.0,
            ]
        })
        .collect();
    Raster::from_vec(w, h, data)
}

/// Labels and instance masks travel as 16-bit grayscale PNG.
pub fn write_labels(path: &Path, labels: &LabelRaster) -> Result<()> {
    let img = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(
        labels.width() as u32,
        labels.height() as u32,
        labels.data().to_vec(),
    )
    .expect("buffer length matches dimensions");
    img.save(path)
        .map_err(|e| Error::parse(path, e.to_string()))
}

pub fn read_labels(path: &Path) -> Result<LabelRaster> {
    let img = image::open(path)
        .map_err(|e| Error::parse(path, e.to_string()))?
        .into_luma16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Raster::from_vec(w, h, img.into_raw())
}

/// Binary masks as 8-bit PNG, 255 = set.
pub fn write_mask(path: &Path, mask: &Raster<bool>) -> Result<()> {
    let buf: Vec<u8> = mask.data().iter().map(|&b| if b { 255 } else { 0 }).collect();
    let img =
        image::GrayImage::from_raw(mask.width() as u32, mask.height() as u32, buf)
            .expect("buffer length matches dimensions");
    img.save(path)
        .map_err(|e| Error::parse(path, e.to_string()))
}

pub fn read_mask(path: &Path) -> Result<Raster<bool>> {
    let img = image::open(path)
        .map_err(|e| Error::parse(path, e.to_string()))?
        .into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.into_raw().into_iter().map(|v| v >= 128).collect();
    Raster::from_vec(w, h, data)
}

/// Generic JSON helpers used by config and manifest files.
pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json =
        serde_json::to_string_pretty(value).map_err(|e| Error::parse(path, e.to_string()))?;
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn create_dir_all(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Buffered writer wrapper with path-tagged errors.
pub fn buf_writer(path: &Path) -> Result<std::io::BufWriter<fs::File>> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(std::io::BufWriter::new(f))
}

pub fn finish_writer(path: &Path, mut w: std::io::BufWriter<fs::File>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}
