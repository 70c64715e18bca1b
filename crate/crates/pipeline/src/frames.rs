//! Videos as frame directories.
//!
//! A video is a directory holding numbered PNG files and an `index.json`
//! listing them in playback order:
//!
//! ```text
//! {"frames":["000000.png","000001.png"]}
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use image::imageops::FilterType;
use image::{DynamicImage, GrayImage, ImageFormat, RgbImage};
use river_core::metrics::FrameBuffer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const INDEX_FILE: &str = "index.json";

#[derive(Debug, Error)]
pub enum FramesError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("frame index {path}: {message}")]
    Index { path: PathBuf, message: String },
    #[error("cannot decode frame {what}: {message}")]
    Decode { what: String, message: String },
    #[error("cannot encode frame: {0}")]
    Encode(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameIndex {
    pub frames: Vec<String>,
}

pub fn read_index(dir: &Path) -> Result<FrameIndex, FramesError> {
    let path = dir.join(INDEX_FILE);
    let text = fs::read_to_string(&path).map_err(|source| FramesError::Io {
        path: path.clone(),
        source,
    })?;
    let index: FrameIndex = serde_json::from_str(&text).map_err(|e| FramesError::Index {
        path: path.clone(),
        message: e.to_string(),
    })?;
    if index.frames.is_empty() {
        return Err(FramesError::Index {
            path,
            message: "no frames listed".into(),
        });
    }
    Ok(index)
}

fn from_image(img: DynamicImage) -> FrameBuffer {
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    FrameBuffer::new(w, h, 3, rgb.into_raw()).expect("rgb buffer has matching length")
}

fn to_image(frame: &FrameBuffer) -> DynamicImage {
    let (w, h) = (frame.width(), frame.height());
    let samples = frame.samples().to_vec();
    match frame.channels() {
        1 => DynamicImage::ImageLuma8(GrayImage::from_raw(w, h, samples).expect("luma buffer")),
        _ => DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, samples).expect("rgb buffer")),
    }
}

/// Loads every indexed frame as RGB, resizing to `resolution` when given.
pub fn load_frames(dir: &Path, resolution: Option<(u32, u32)>) -> Result<Vec<FrameBuffer>, FramesError> {
    let index = read_index(dir)?;
    index
        .frames
        .iter()
        .map(|name| {
            let path = dir.join(name);
            let bytes = fs::read(&path).map_err(|source| FramesError::Io {
                path: path.clone(),
                source,
            })?;
            let frame = decode_png(&bytes).map_err(|e| match e {
                FramesError::Decode { message, .. } => FramesError::Decode {
                    what: path.display().to_string(),
                    message,
                },
                other => other,
            })?;
            Ok(match resolution {
                Some(dims) => resize(&frame, dims),
                None => frame,
            })
        })
        .collect()
}

pub fn resize(frame: &FrameBuffer, (w, h): (u32, u32)) -> FrameBuffer {
    if (frame.width(), frame.height()) == (w, h) {
        return frame.clone();
    }
    from_image(to_image(frame).resize_exact(w, h, FilterType::Triangle))
}

/// Writes `frames` as `000000.png`, ... plus the index. Returns the frame paths.
pub fn write_frames(dir: &Path, frames: &[FrameBuffer]) -> Result<Vec<PathBuf>, FramesError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| FramesError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut names = Vec::with_capacity(frames.len());
    let mut paths = Vec::with_capacity(frames.len());
    for (k, frame) in frames.iter().enumerate() {
        let name = format!("{k:06}.png");
        let path = dir.join(&name);
        fs::write(&path, encode_png(frame)?).map_err(io(&path))?;
        names.push(name);
        paths.push(path);
    }
    let index = serde_json::to_string(&FrameIndex { frames: names }).expect("index serializes");
    let index_path = dir.join(INDEX_FILE);
    fs::write(&index_path, index).map_err(io(&index_path))?;
    Ok(paths)
}

pub fn encode_png(frame: &FrameBuffer) -> Result<Vec<u8>, FramesError> {
    let mut out = std::io::Cursor::new(Vec::new());
    to_image(frame)
        .write_to(&mut out, ImageFormat::Png)
        .map_err(|e| FramesError::Encode(e.to_string()))?;
    Ok(out.into_inner())
}

pub fn decode_png(bytes: &[u8]) -> Result<FrameBuffer, FramesError> {
    image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map(from_image)
        .map_err(|e| FramesError::Decode {
            what: "from memory".into(),
            message: e.to_string(),
        })
}

pub fn to_base64(frame: &FrameBuffer) -> Result<String, FramesError> {
    Ok(STANDARD.encode(encode_png(frame)?))
}

pub fn from_base64(text: &str) -> Result<FrameBuffer, FramesError> {
    let bytes = STANDARD.decode(text).map_err(|e| FramesError::Decode {
        what: "base64 payload".into(),
        message: e.to_string(),
    })?;
    decode_png(&bytes)
}

/// Every `stride`-th frame, starting with the first.
pub fn strided<T>(items: &[T], stride: usize) -> Vec<&T> {
    items.iter().step_by(stride.max(1)).collect()
}
