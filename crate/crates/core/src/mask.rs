//! Run-length encoded binary masks.
//!
//! Masks are stored row-major as alternating run lengths, starting with a run
//! of zeros (which may be empty). The run lengths always sum to
//! `width * height`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("run lengths sum to {sum}, expected {expected} ({width}x{height})")]
    LengthMismatch {
        sum: u64,
        expected: u64,
        width: u32,
        height: u32,
    },
    #[error("bitmap has {got} samples, expected {expected}")]
    BitmapSize { got: usize, expected: usize },
    #[error("mask file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("mask file {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// An uncompressed-count RLE mask.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleMask {
    pub rle: Vec<u64>,
    pub width: u32,
    pub height: u32,
}

impl RleMask {
    /// Encodes a row-major bitmap.
    pub fn encode(bits: &[bool], width: u32, height: u32) -> Result<Self, MaskError> {
        let expected = width as usize * height as usize;
        if bits.len() != expected {
            return Err(MaskError::BitmapSize {
                got: bits.len(),
                expected,
            });
        }
        let mut rle = Vec::new();
        let mut current = false;
        let mut run = 0u64;
        for &bit in bits {
            if bit == current {
                run += 1;
            } else {
                rle.push(run);
                current = bit;
                run = 1;
            }
        }
        if run > 0 || rle.is_empty() {
            rle.push(run);
        }
        Ok(Self { rle, width, height })
    }

    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            rle: vec![u64::from(width) * u64::from(height)],
            width,
            height,
        }
    }

    pub fn pixel_count(&self) -> u64 {
        u64::from(self.width) * u64::from(self.height)
    }

    pub fn check(&self) -> Result<(), MaskError> {
        let sum: u64 = self.rle.iter().sum();
        if sum != self.pixel_count() {
            return Err(MaskError::LengthMismatch {
                sum,
                expected: self.pixel_count(),
                width: self.width,
                height: self.height,
            });
        }
        Ok(())
    }

    pub fn decode(&self) -> Result<Vec<bool>, MaskError> {
        self.check()?;
        let mut bits = Vec::with_capacity(self.pixel_count() as usize);
        let mut value = false;
        for &run in &self.rle {
            bits.extend(std::iter::repeat_n(value, run as usize));
            value = !value;
        }
        Ok(bits)
    }

    /// Number of set pixels.
    pub fn area(&self) -> u64 {
        self.rle.iter().skip(1).step_by(2).sum()
    }

    /// Set pixels as a fraction of the frame area.
    pub fn area_fraction(&self) -> f64 {
        if self.pixel_count() == 0 {
            return 0.0;
        }
        self.area() as f64 / self.pixel_count() as f64
    }

    /// Mean pixel-centre position of the set pixels, normalized to `[0, 1]`.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let area = self.area();
        if area == 0 {
            return None;
        }
        let width = u64::from(self.width);
        let (mut sx, mut sy) = (0.0f64, 0.0f64);
        let mut pos = 0u64;
        let mut value = false;
        for &run in &self.rle {
            if value {
                for p in pos..pos + run {
                    sx += (p % width) as f64 + 0.5;
                    sy += (p / width) as f64 + 0.5;
                }
            }
            pos += run;
            value = !value;
        }
        Some((
            sx / area as f64 / f64::from(self.width),
            sy / area as f64 / f64::from(self.height),
        ))
    }

    pub fn read_sidecar(path: &Path) -> Result<Self, MaskError> {
        let text = fs::read_to_string(path).map_err(|source| MaskError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mask: RleMask = serde_json::from_str(&text).map_err(|source| MaskError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        mask.check()?;
        Ok(mask)
    }

    pub fn write_sidecar(&self, path: &Path) -> Result<(), MaskError> {
        let text = serde_json::to_string(self).expect("mask serializes");
        fs::write(path, text).map_err(|source| MaskError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn first_run_is_zeros() {
        let mask = RleMask::encode(&[true, true, false, true], 2, 2).unwrap();
        assert_eq!(mask.rle, vec![0, 2, 1, 1]);
        assert_eq!(mask.area(), 3);
    }

    #[test]
    fn all_zero_mask_is_single_run() {
        let mask = RleMask::encode(&[false; 6], 3, 2).unwrap();
        assert_eq!(mask.rle, vec![6]);
        assert_eq!(mask, RleMask::empty(3, 2));
        assert_eq!(mask.centroid(), None);
    }

    #[test]
    fn centroid_of_single_pixel() {
        let mut bits = vec![false; 4 * 2];
        bits[4 + 3] = true;
        let mask = RleMask::encode(&bits, 4, 2).unwrap();
        assert_eq!(mask.centroid(), Some((3.5 / 4.0, 1.5 / 2.0)));
        assert_eq!(mask.area_fraction(), 1.0 / 8.0);
    }

    #[test]
    fn bad_run_sum_rejected() {
        let mask = RleMask {
            rle: vec![1, 2],
            width: 2,
            height: 2,
        };
        assert!(matches!(mask.check(), Err(MaskError::LengthMismatch { sum: 3, .. })));
    }

    #[test]
    fn sidecar_round_trip() {
        let dir = std::env::temp_dir().join(format!("river-mask-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.rle");
        let mask = RleMask::encode(&[false, true, true, false], 2, 2).unwrap();
        mask.write_sidecar(&path).unwrap();
        assert_eq!(RleMask::read_sidecar(&path).unwrap(), mask);
        fs::remove_dir_all(&dir).ok();
    }

    proptest! {
        #[test]
        fn encode_decode_identity(bits in proptest::collection::vec(any::<bool>(), 12)) {
            let mask = RleMask::encode(&bits, 4, 3).unwrap();
            prop_assert_eq!(mask.decode().unwrap(), bits.clone());
            prop_assert_eq!(mask.area() as usize, bits.iter().filter(|b| **b).count());
        }
    }
}
