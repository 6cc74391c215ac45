//! SSIM and PSNR on `[0, 1]`-mapped images.

use crate::error::{Error, Result};
use crate::image_tensor::ImageTensor;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Channel-first pixels mapped from `[-1, 1]` to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitImage {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl UnitImage {
    pub fn from_tensor(t: &ImageTensor) -> Result<Self> {
        let (channels, height, width) = t.dims();
        let data = t
            .to_vec()?
            .into_iter()
            .map(|v| (f64::from(v) + 1.0) / 2.0)
            .collect();
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::shape(format!(
                "{} values for a {channels}x{height}x{width} image",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if (self.channels, self.height, self.width) != (other.channels, other.height, other.width) {
            return Err(Error::shape(format!(
                "{}x{}x{} vs {}x{}x{}",
                self.channels, self.height, self.width, other.channels, other.height, other.width
            )));
        }
        Ok(())
    }
}

/// Normalized 1-D Gaussian taps.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let mid = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - mid).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

/// Separable "valid" filtering of a `h x w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        let src = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().zip(&src[x..x + k]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * rows[(y + i) * ow + x])
                .sum();
        }
    }
    out
}

fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let prod = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect()
    };
    let mu_a = filter_valid(a, h, w, &taps);
    let mu_b = filter_valid(b, h, w, &taps);
    let aa = filter_valid(&prod(&|x, _| x * x), h, w, &taps);
    let bb = filter_valid(&prod(&|_, y| y * y), h, w, &taps);
    let ab = filter_valid(&prod(&|x, y| x * y), h, w, &taps);
    let n = mu_a.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        total +=
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    total / n as f64
}

/// Mean SSIM over an 11x11 Gaussian window (sigma 1.5), averaged over channels.
pub fn ssim_unit(a: &UnitImage, b: &UnitImage) -> Result<f64> {
    a.check_same(b)?;
    if a.height < SSIM_WINDOW || a.width < SSIM_WINDOW {
        return Err(Error::shape(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} images"
        )));
    }
    let per_channel: f64 = (0..a.channels)
        .map(|c| ssim_plane(a.plane(c), b.plane(c), a.height, a.width))
        .sum();
    Ok(per_channel / a.channels as f64)
}

pub fn ssim(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    ssim_unit(&UnitImage::from_tensor(a)?, &UnitImage::from_tensor(b)?)
}

pub fn mse_unit(a: &UnitImage, b: &UnitImage) -> Result<f64> {
    a.check_same(b)?;
    let n = a.data.len().max(1) as f64;
    Ok(a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        / n)
}

/// `10 log10(1 / MSE)`; `+Inf` for identical images.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

pub fn psnr(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    let (a, b) = (UnitImage::from_tensor(a)?, UnitImage::from_tensor(b)?);
    Ok(psnr_from_mse(mse_unit(&a, &b)?))
}
