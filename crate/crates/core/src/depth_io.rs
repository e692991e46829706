//! Depth image files.
//!
//! Two formats are supported:
//!
//! - 16-bit grayscale PNG holding millimeters, `0` = invalid.
//! - Raw float: a 16-byte little-endian header (`b"GFDI"`, `u32` width,
//!   `u32` height, `u32` reserved = 0) followed by row-major `f32` meters.

use std::path::Path;

use image::{ImageBuffer, Luma};

use crate::camera::DepthImage;
use crate::error::{Error, Result};

pub const RAW_MAGIC: &[u8; 4] = b"GFDI";

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepthFormat {
    Png,
    Raw,
}

impl DepthFormat {
    pub fn extension(self) -> &'static str {
        match self {
            DepthFormat::Png => "png",
            DepthFormat::Raw => "gfdi",
        }
    }

    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "png" => Some(DepthFormat::Png),
            "gfdi" | "raw" => Some(DepthFormat::Raw),
            _ => None,
        }
    }
}

fn format_error(path: &Path, message: impl Into<String>) -> Error {
    Error::DepthFormat {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Millimeter encoding of a depth value; valid depths never map to 0.
pub fn depth_to_mm(depth: f64) -> u16 {
    if depth <= 0.0 {
        0
    } else {
        (depth * 1000.0).round().clamp(1.0, u16::MAX as f64) as u16
    }
}

pub fn encode_raw(img: &DepthImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * img.data().len());
    out.extend_from_slice(RAW_MAGIC);
    out.extend_from_slice(&(img.width() as u32).to_le_bytes());
    out.extend_from_slice(&(img.height() as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for &d in img.data() {
        out.extend_from_slice(&(d as f32).to_le_bytes());
    }
    out
}

pub fn decode_raw(bytes: &[u8], path: &Path) -> Result<DepthImage> {
    if bytes.len() < 16 || &bytes[..4] != RAW_MAGIC {
        return Err(format_error(path, "missing GFDI header"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (width, height) = (word(4), word(8));
    let expected = 16 + 4 * width * height;
    if bytes.len() != expected {
        return Err(format_error(
            path,
            format!("expected {expected} bytes for {width}x{height}, found {}", bytes.len()),
        ));
    }
    let data = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    DepthImage::from_vec(width, height, data).map_err(|e| format_error(path, e.to_string()))
}

pub fn write_depth(img: &DepthImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match DepthFormat::from_path(path) {
        Some(DepthFormat::Png) => {
            let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(
                img.width() as u32,
                img.height() as u32,
                img.data().iter().map(|&d| depth_to_mm(d)).collect(),
            )
            .expect("buffer matches dimensions");
            buf.save(path)?;
            Ok(())
        }
        Some(DepthFormat::Raw) => std::fs::write(path, encode_raw(img)).map_err(|e| Error::io(path, e)),
        None => Err(format_error(path, "unknown depth extension (use .png or .gfdi)")),
    }
}

pub fn read_depth(path: impl AsRef<Path>) -> Result<DepthImage> {
    let path = path.as_ref();
    match DepthFormat::from_path(path) {
        Some(DepthFormat::Png) => {
            let dynimg = image::open(path)?;
            let luma = dynimg.to_luma16();
            let (w, h) = luma.dimensions();
            let data = luma.into_raw().into_iter().map(|mm| mm as f64 / 1000.0).collect();
            DepthImage::from_vec(w as usize, h as usize, data)
        }
        Some(DepthFormat::Raw) => {
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            decode_raw(&bytes, path)
        }
        None => Err(format_error(path, "unknown depth extension (use .png or .gfdi)")),
    }
}
