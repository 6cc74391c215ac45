//! `ImageTensor`: a channel-first floating-point image with values in
//! `[-1, 1]`, the common currency of models, losses and metrics.

use std::path::Path;

use candle_core::{DType, Device, Tensor};
use image::{imageops::FilterType, RgbImage};

use crate::error::{Error, Result};

/// `px / 127.5 - 1`.
pub fn normalize_px(px: u8) -> f32 {
    f32::from(px) / 127.5 - 1.0
}

/// Inverse of [`normalize_px`], rounding and saturating.
pub fn denormalize_px(v: f32) -> u8 {
    ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

/// A `C x H x W` tensor. Batched model inputs are built by stacking.
#[derive(Debug, Clone)]
pub struct ImageTensor(Tensor);

impl ImageTensor {
    pub fn new(tensor: Tensor) -> Result<Self> {
        if tensor.rank() != 3 {
            return Err(Error::shape(format!(
                "image tensor must be C x H x W, got {:?}",
                tensor.dims()
            )));
        }
        Ok(Self(tensor))
    }

    pub fn from_vec(data: Vec<f32>, channels: usize, height: usize, width: usize) -> Result<Self> {
        let t = Tensor::from_vec(data, (channels, height, width), &Device::Cpu)?;
        Ok(Self(t))
    }

    pub fn constant(value: f32, channels: usize, height: usize, width: usize) -> Result<Self> {
        Self::from_vec(
            vec![value; channels * height * width],
            channels,
            height,
            width,
        )
    }

    pub fn from_rgb(img: &RgbImage) -> Result<Self> {
        let (w, h) = img.dimensions();
        let (w, h) = (w as usize, h as usize);
        let raw = img.as_raw();
        let mut data = vec![0f32; 3 * h * w];
        for c in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    data[(c * h + y) * w + x] = normalize_px(raw[(y * w + x) * 3 + c]);
                }
            }
        }
        Self::from_vec(data, 3, h, w)
    }

    /// Decodes, resizes to `size x size` when needed, and normalizes.
    pub fn load(path: &Path, size: Option<u32>) -> Result<Self> {
        let img = image::open(path).map_err(|e| Error::UndecodableImage {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let mut rgb = img.to_rgb8();
        if let Some(s) = size {
            if rgb.dimensions() != (s, s) {
                rgb = image::imageops::resize(&rgb, s, s, FilterType::Triangle);
            }
        }
        Self::from_rgb(&rgb)
    }

    pub fn to_rgb(&self) -> Result<RgbImage> {
        let (c, h, w) = self.dims();
        if c != 3 && c != 1 {
            return Err(Error::shape(format!(
                "cannot render {c}-channel image as RGB"
            )));
        }
        let data = self.to_vec()?;
        let mut out = RgbImage::new(w as u32, h as u32);
        for y in 0..h {
            for x in 0..w {
                let px = |ch: usize| denormalize_px(data[(ch * h + y) * w + x]);
                let rgb = if c == 3 {
                    [px(0), px(1), px(2)]
                } else {
                    [px(0); 3]
                };
                out.put_pixel(x as u32, y as u32, image::Rgb(rgb));
            }
        }
        Ok(out)
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_rgb()?
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| Error::io(path, std::io::Error::other(e)))
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        let d = self.0.dims();
        (d[0], d[1], d[2])
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    /// Row-major `C, H, W` values as `f32`.
    pub fn to_vec(&self) -> Result<Vec<f32>> {
        Ok(self
            .0
            .to_dtype(DType::F32)?
            .flatten_all()?
            .to_vec1::<f32>()?)
    }

    /// Adds a leading batch axis of one.
    pub fn batched(&self) -> Result<Tensor> {
        Ok(self.0.unsqueeze(0)?)
    }

    /// Splits an `N x C x H x W` batch into images.
    pub fn unbatch(batch: &Tensor) -> Result<Vec<Self>> {
        let n = batch.dim(0)?;
        (0..n).map(|i| Self::new(batch.get(i)?)).collect()
    }

    pub fn stack(images: &[Self]) -> Result<Tensor> {
        let ts: Vec<&Tensor> = images.iter().map(|i| &i.0).collect();
        Ok(Tensor::stack(&ts, 0)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn normalization_round_trips_every_byte(px in any::<u8>()) {
            prop_assert_eq!(denormalize_px(normalize_px(px)), px);
        }
    }

    #[test]
    fn rgb_round_trip() {
        let mut img = RgbImage::new(5, 4);
        for (i, p) in img.pixels_mut().enumerate() {
            *p = image::Rgb([(i * 7) as u8, (i * 13) as u8, 255 - i as u8]);
        }
        let t = ImageTensor::from_rgb(&img).unwrap();
        assert_eq!(t.dims(), (3, 4, 5));
        assert_eq!(t.to_rgb().unwrap(), img);
    }

    #[test]
    fn extremes_map_to_unit_range() {
        assert_eq!(normalize_px(0), -1.0);
        assert_eq!(normalize_px(255), 1.0);
    }
}
