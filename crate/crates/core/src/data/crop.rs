//! Face cropping behind a pluggable detector.

use std::collections::HashMap;

use image::{imageops::FilterType, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image_tensor::ImageTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl CropBox {
    pub fn fits_within(&self, width: u32, height: u32) -> bool {
        u64::from(self.x) + u64::from(self.w) <= u64::from(width)
            && u64::from(self.y) + u64::from(self.h) <= u64::from(height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: CropBox,
    pub confidence: f32,
}

/// Anything that proposes face boxes. `source` is the image's path relative
/// to the corpus root, which lets table-driven detectors look up boxes.
pub trait FaceDetector: Send + Sync {
    fn detect(&self, source: &str, image: &RgbImage) -> Vec<Detection>;
}

/// Finds nothing, so every crop uses the center-square fallback.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoDetector;

impl FaceDetector for NoDetector {
    fn detect(&self, _source: &str, _image: &RgbImage) -> Vec<Detection> {
        Vec::new()
    }
}

/// Boxes precomputed by an external detector, read from a whitespace table:
/// `<relative path> <x> <y> <w> <h> <confidence>` per line.
#[derive(Debug, Default, Clone)]
pub struct BoxTableDetector {
    boxes: HashMap<String, Vec<Detection>>,
}

impl BoxTableDetector {
    pub fn parse(text: &str) -> Result<Self> {
        let mut boxes: HashMap<String, Vec<Detection>> = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || Error::InvalidConfig(format!("box table line {}: `{raw}`", i + 1));
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [path, x, y, w, h, conf] = fields[..] else {
                return Err(bad());
            };
            let num = |s: &str| s.parse::<u32>().map_err(|_| bad());
            let confidence: f32 = conf.parse().map_err(|_| bad())?;
            if !confidence.is_finite() {
                return Err(bad());
            }
            let bbox = CropBox {
                x: num(x)?,
                y: num(y)?,
                w: num(w)?,
                h: num(h)?,
            };
            boxes
                .entry(path.to_string())
                .or_default()
                .push(Detection { bbox, confidence });
        }
        Ok(Self { boxes })
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }
}

impl FaceDetector for BoxTableDetector {
    fn detect(&self, source: &str, _image: &RgbImage) -> Vec<Detection> {
        self.boxes.get(source).cloned().unwrap_or_default()
    }
}

#[derive(Debug, Clone)]
pub struct Crop {
    pub tensor: ImageTensor,
    pub crop_box: CropBox,
    /// True when no usable detection existed and the center square was used.
    pub fallback: bool,
}

/// Expands `bbox` to a square around its center, clamped to the image.
pub fn square_box(bbox: CropBox, width: u32, height: u32) -> CropBox {
    let side = bbox.w.max(bbox.h).min(width).min(height).max(1);
    let cx = u64::from(bbox.x) * 2 + u64::from(bbox.w);
    let cy = u64::from(bbox.y) * 2 + u64::from(bbox.h);
    let place = |center2: u64, limit: u32| -> u32 {
        let start = (center2 / 2).saturating_sub(u64::from(side) / 2);
        start.min(u64::from(limit - side)) as u32
    };
    CropBox {
        x: place(cx, width),
        y: place(cy, height),
        w: side,
        h: side,
    }
}

pub fn center_square(width: u32, height: u32) -> CropBox {
    let side = width.min(height);
    CropBox {
        x: (width - side) / 2,
        y: (height - side) / 2,
        w: side,
        h: side,
    }
}

/// Crops the most confident detection (or the center square), resizes to
/// `size x size` and normalizes to `[-1, 1]`.
pub fn crop_face(
    image: &RgbImage,
    source: &str,
    detector: &dyn FaceDetector,
    size: u32,
) -> Result<Crop> {
    let (width, height) = image.dimensions();
    if width == 0 || height == 0 {
        return Err(Error::UndecodableImage {
            path: source.into(),
            reason: "empty image".into(),
        });
    }
    let best = detector
        .detect(source, image)
        .into_iter()
        .filter(|d| d.bbox.w > 0 && d.bbox.h > 0 && d.confidence.is_finite())
        .filter(|d| d.bbox.x < width && d.bbox.y < height)
        .max_by(|a, b| a.confidence.total_cmp(&b.confidence));
    let (crop_box, fallback) = match best {
        Some(d) => (square_box(d.bbox, width, height), false),
        None => (center_square(width, height), true),
    };
    let view =
        image::imageops::crop_imm(image, crop_box.x, crop_box.y, crop_box.w, crop_box.h).to_image();
    let resized = if view.dimensions() == (size, size) {
        view
    } else {
        image::imageops::resize(&view, size, size, FilterType::Triangle)
    };
    Ok(Crop {
        tensor: ImageTensor::from_rgb(&resized)?,
        crop_box,
        fallback,
    })
}

/// Decodes `bytes` and crops; decoding failures surface as `UndecodableImage`.
pub fn crop_encoded(
    bytes: &[u8],
    source: &str,
    detector: &dyn FaceDetector,
    size: u32,
) -> Result<Crop> {
    let img = image::load_from_memory(bytes).map_err(|e| Error::UndecodableImage {
        path: source.into(),
        reason: e.to_string(),
    })?;
    crop_face(&img.to_rgb8(), source, detector, size)
}
