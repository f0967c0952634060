//! Image and mask data model.
//!
//! Predictions and soft annotations are [`SaliencyMap`]s holding `f64` values
//! in `[0, 1]`; hard annotations are [`BinaryMask`]s. Both are row-major
//! `width x height` grids. The contour operator shared by metrics and losses
//! lives here as well ([`extract_contour`]).

use std::path::Path;

use image::{ColorType, GrayImage, ImageReader};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default threshold used to binarize non-binary annotations.
pub const DEFAULT_GT_THRESHOLD: f64 = 0.5;

/// Shared read access to a row-major grid of values in `[0, 1]`.
pub trait Grid {
    fn width(&self) -> usize;
    fn height(&self) -> usize;
    fn get(&self, index: usize) -> f64;

    fn len(&self) -> usize {
        self.width() * self.height()
    }

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Whether every value is exactly 0 or 1.
    fn is_hard(&self) -> bool;
}

pub(crate) fn check_dims(a: &impl Grid, b: &impl Grid) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch {
            left_width: a.width(),
            left_height: a.height(),
            right_width: b.width(),
            right_height: b.height(),
        });
    }
    Ok(())
}

fn check_shape(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidMap(format!(
            "zero-dimension grid {width}x{height}"
        )));
    }
    if width.checked_mul(height) != Some(len) {
        return Err(Error::InvalidMap(format!(
            "{width}x{height} grid needs {} values, got {len}",
            width.saturating_mul(height)
        )));
    }
    Ok(())
}

/// Real-valued per-pixel map in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl SaliencyMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        check_shape(width, height, values.len())?;
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::InvalidMap(format!(
                "value {v} at index {i} is outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width.saturating_mul(height)])
    }

    /// Builds a map from 8-bit samples, dividing each by 255 exactly once.
    pub fn from_bytes(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        check_shape(width, height, bytes.len())?;
        Ok(Self {
            width,
            height,
            values: bytes.iter().map(|&b| f64::from(b) / 255.0).collect(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// `1 - v` at every pixel.
    pub fn complement(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|v| 1.0 - v).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        Self {
            width: self.height,
            height: self.width,
            values: transpose_values(&self.values, self.width, self.height),
        }
    }

    /// Quantizes every value to the 8-bit grid used by the threshold sweep.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.values.iter().map(|&v| to_byte(v)).collect()
    }

    /// Nearest-neighbour resampling to `width x height`.
    pub fn resize_nearest(&self, width: usize, height: usize) -> Result<Self> {
        check_shape(width, height, width.saturating_mul(height))?;
        let values = resize_nearest_values(&self.values, self.width, self.height, width, height);
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        save_gray(path.as_ref(), self.width, self.height, self.to_bytes())
    }
}

impl Grid for SaliencyMap {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn get(&self, index: usize) -> f64 {
        self.values[index]
    }
    fn is_hard(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0 || v == 1.0)
    }
}

/// Per-pixel `{0, 1}` mask.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    values: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, values: Vec<bool>) -> Result<Self> {
        check_shape(width, height, values.len())?;
        Ok(Self {
            width,
            height,
            values,
        })
    }

    /// Accepts `0`/`1` samples only.
    pub fn from_bits(width: usize, height: usize, bits: &[u8]) -> Result<Self> {
        check_shape(width, height, bits.len())?;
        let values = bits
            .iter()
            .enumerate()
            .map(|(i, &b)| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::InvalidMap(format!(
                    "ground truth must be binary: value {other} at index {i}"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    pub fn count_ones(&self) -> usize {
        self.values.iter().filter(|&&v| v).count()
    }

    /// Foreground fraction.
    pub fn mean(&self) -> f64 {
        self.count_ones() as f64 / self.values.len() as f64
    }

    /// Values as `0.0` / `1.0`.
    pub fn to_f64(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|&v| if v { 1.0 } else { 0.0 })
            .collect()
    }

    pub fn to_saliency_map(&self) -> SaliencyMap {
        SaliencyMap {
            width: self.width,
            height: self.height,
            values: self.to_f64(),
        }
    }

    pub fn complement(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|v| !v).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        Self {
            width: self.height,
            height: self.width,
            values: transpose_values(&self.values, self.width, self.height),
        }
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes = self.values.iter().map(|&v| if v { 255 } else { 0 }).collect();
        save_gray(path.as_ref(), self.width, self.height, bytes)
    }
}

impl Grid for BinaryMask {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn get(&self, index: usize) -> f64 {
        if self.values[index] {
            1.0
        } else {
            0.0
        }
    }
    fn is_hard(&self) -> bool {
        true
    }
}

/// Boundary map produced by [`extract_contour`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourMask {
    width: usize,
    height: usize,
    values: Vec<f64>,
    hard: bool,
    source_id: Option<String>,
}

impl ContourMask {
    /// Wraps externally supplied contour weights (values in `[0, 1]`).
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        let map = SaliencyMap::new(width, height, values)?;
        let hard = map.is_hard();
        Ok(Self {
            width,
            height,
            values: map.into_values(),
            hard,
            source_id: None,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::from_values(width, height, vec![0.0; width.saturating_mul(height)])
    }

    pub fn ones(width: usize, height: usize) -> Result<Self> {
        Self::from_values(width, height, vec![1.0; width.saturating_mul(height)])
    }

    pub fn with_source_id(mut self, id: impl Into<String>) -> Self {
        self.source_id = Some(id.into());
        self
    }

    pub fn source_id(&self) -> Option<&str> {
        self.source_id.as_deref()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// True when derived from a binary mask (values in `{0, 1}`).
    pub fn is_hard_variant(&self) -> bool {
        self.hard
    }

    pub fn is_all_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

impl Grid for ContourMask {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn get(&self, index: usize) -> f64 {
        self.values[index]
    }
    fn is_hard(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0 || v == 1.0)
    }
}

/// Pixel is 1 iff its value is strictly greater than `threshold`.
pub fn binarize(map: &SaliencyMap, threshold: f64) -> Result<BinaryMask> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidArgument(format!(
            "binarization threshold {threshold} outside [0, 1]"
        )));
    }
    Ok(BinaryMask {
        width: map.width,
        height: map.height,
        values: map.values.iter().map(|&v| v > threshold).collect(),
    })
}

/// Soft or hard contour map `M = maxpool3x3(Y) * maxpool3x3(1 - Y)`.
///
/// Windows are clipped at the image border rather than padded. On a binary
/// input the result is binary; on a soft input each pooled term is the plain
/// window maximum.
pub fn extract_contour<G: Grid>(mask: &G) -> ContourMask {
    let (w, h) = (mask.width(), mask.height());
    let mut values = Vec::with_capacity(w * h);
    for r in 0..h {
        let rows = r.saturating_sub(1)..=(r + 1).min(h - 1);
        for c in 0..w {
            let mut pos = 0.0_f64;
            let mut neg = 0.0_f64;
            for rr in rows.clone() {
                for cc in c.saturating_sub(1)..=(c + 1).min(w - 1) {
                    let v = mask.get(rr * w + cc);
                    pos = pos.max(v);
                    neg = neg.max(1.0 - v);
                }
            }
            values.push(pos * neg);
        }
    }
    ContourMask {
        width: w,
        height: h,
        values,
        hard: mask.is_hard(),
        source_id: None,
    }
}

/// Loads an 8-bit single-channel image as a [`SaliencyMap`].
pub fn load_saliency_map(path: impl AsRef<Path>) -> Result<SaliencyMap> {
    let path = path.as_ref();
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let image = reader.decode().map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let color = image.color();
    if color.channel_count() != 1 {
        return Err(Error::UnsupportedChannels {
            path: path.to_path_buf(),
            channels: color.channel_count(),
        });
    }
    if color != ColorType::L8 {
        return Err(Error::UnsupportedBitDepth {
            path: path.to_path_buf(),
            bits: color.bits_per_pixel(),
        });
    }
    let gray = image.into_luma8();
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::InvalidMap(format!(
            "{}: zero-dimension image",
            path.display()
        )));
    }
    SaliencyMap::from_bytes(w, h, gray.as_raw())
}

/// Loads a ground-truth image, binarizing at `threshold`.
pub fn load_binary_mask(path: impl AsRef<Path>, threshold: f64) -> Result<BinaryMask> {
    binarize(&load_saliency_map(path)?, threshold)
}

pub(crate) fn to_byte(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

fn save_gray(path: &Path, width: usize, height: usize, bytes: Vec<u8>) -> Result<()> {
    let img: GrayImage = GrayImage::from_raw(width as u32, height as u32, bytes)
        .ok_or_else(|| Error::InvalidMap("buffer does not match image size".into()))?;
    img.save(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Decode {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })
}

fn transpose_values<T: Copy>(values: &[T], width: usize, height: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(values.len());
    for c in 0..width {
        for r in 0..height {
            out.push(values[r * width + c]);
        }
    }
    out
}

fn resize_nearest_values(
    values: &[f64],
    src_w: usize,
    src_h: usize,
    dst_w: usize,
    dst_h: usize,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(dst_w * dst_h);
    for r in 0..dst_h {
        let sr = ((r as f64 + 0.5) * src_h as f64 / dst_h as f64).floor() as usize;
        let sr = sr.min(src_h - 1);
        for c in 0..dst_w {
            let sc = ((c as f64 + 0.5) * src_w as f64 / dst_w as f64).floor() as usize;
            out.push(values[sr * src_w + sc.min(src_w - 1)]);
        }
    }
    out
}
