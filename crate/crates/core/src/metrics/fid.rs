//! Frechet distance between Gaussian fits of two embedding sets.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::image_tensor::ImageTensor;
use crate::nn::checkpoint::{Checkpoint, TensorData};
use crate::rng::SeededRng;

/// Eigenvalues down to this (relative to the spectrum's scale) count as zero.
pub const EIGEN_CLAMP: f64 = 1e-6;

/// Maps a set of images to an `n x d` embedding matrix.
pub trait FeatureExtractor: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, images: &[ImageTensor]) -> Result<DMatrix<f64>>;
}

/// Average-pools each channel onto a `grid x grid` lattice.
pub fn pooled_features(img: &ImageTensor, grid: usize) -> Result<Vec<f64>> {
    let (c, h, w) = img.dims();
    if h < grid || w < grid {
        return Err(Error::shape(format!(
            "image {h}x{w} smaller than the {grid}x{grid} pooling grid"
        )));
    }
    let data = img.to_vec()?;
    let mut out = Vec::with_capacity(c * grid * grid);
    for ch in 0..c {
        for gy in 0..grid {
            let (y0, y1) = (gy * h / grid, (gy + 1) * h / grid);
            for gx in 0..grid {
                let (x0, x1) = (gx * w / grid, (gx + 1) * w / grid);
                let mut s = 0.0;
                for y in y0..y1 {
                    for x in x0..x1 {
                        s += f64::from(data[(ch * h + y) * w + x]);
                    }
                }
                out.push(s / ((y1 - y0) * (x1 - x0)) as f64);
            }
        }
    }
    Ok(out)
}

/// `tanh(W pool(x) + b)` with a fixed projection. The default
/// [`RandomProjection`] draws `W` from a seeded Gaussian; a stored projection
/// can be loaded from a `features` checkpoint.
#[derive(Debug, Clone)]
pub struct RandomProjection {
    grid: usize,
    in_dim: usize,
    projection: DMatrix<f64>,
    bias: DVector<f64>,
}

impl RandomProjection {
    pub fn new(channels: usize, grid: usize, dim: usize, seed: u64) -> Self {
        let in_dim = channels * grid * grid;
        let mut rng = SeededRng::derive(seed, "fid-projection");
        let scale = 1.0 / (in_dim as f64).sqrt();
        let values = rng.gaussian_vec(dim * in_dim, 0.0, 2.0 * scale);
        let projection = DMatrix::from_row_slice(dim, in_dim, &values);
        Self {
            grid,
            in_dim,
            projection,
            bias: DVector::zeros(dim),
        }
    }

    /// The test-grade default: 3 channels, 8x8 pooling, 64 features.
    pub fn stub() -> Self {
        Self::new(3, 8, 64, 0)
    }

    /// Loads tensors `projection` (`d x in`) and optional `bias` (`d`) plus
    /// metadata `{"grid": g}` from a checkpoint tagged `features`.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.tag != "features" {
            return Err(Error::Checkpoint(format!(
                "expected a `features` checkpoint, found `{}`",
                ck.tag
            )));
        }
        let grid = ck.metadata["grid"]
            .as_u64()
            .ok_or_else(|| Error::Checkpoint("features metadata lacks `grid`".into()))?
            as usize;
        let values = |name: &str| -> Option<(Vec<usize>, Vec<f64>)> {
            let t = ck.get(name)?;
            let v = match &t.data {
                TensorData::F32(v) => v.iter().map(|x| f64::from(*x)).collect(),
                TensorData::F64(v) => v.clone(),
            };
            Some((t.shape.clone(), v))
        };
        let (shape, proj) =
            values("projection").ok_or_else(|| Error::Checkpoint("missing `projection`".into()))?;
        let [d, in_dim] = shape[..] else {
            return Err(Error::Checkpoint("`projection` must be 2-D".into()));
        };
        if grid == 0 || in_dim % (grid * grid) != 0 {
            return Err(Error::Checkpoint(
                "projection width is not channels x grid^2".into(),
            ));
        }
        let bias = match values("bias") {
            Some((s, b)) if s == [d] => DVector::from_vec(b),
            Some(_) => return Err(Error::Checkpoint("`bias` must have length d".into())),
            None => DVector::zeros(d),
        };
        Ok(Self {
            grid,
            in_dim,
            projection: DMatrix::from_row_slice(d, in_dim, &proj),
            bias,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

impl FeatureExtractor for RandomProjection {
    fn dim(&self) -> usize {
        self.projection.nrows()
    }

    fn embed(&self, images: &[ImageTensor]) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(images.len(), self.dim());
        for (i, img) in images.iter().enumerate() {
            let x = DVector::from_vec(pooled_features(img, self.grid)?);
            if x.len() != self.in_dim {
                return Err(Error::shape(format!(
                    "extractor expects {} pooled values, got {}",
                    self.in_dim,
                    x.len()
                )));
            }
            let y = (&self.projection * x + &self.bias).map(f64::tanh);
            out.set_row(i, &y.transpose());
        }
        Ok(out)
    }
}

/// Row mean and covariance (`n - 1` divisor, or `1` for a single row).
pub fn mean_and_covariance(x: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = x.nrows();
    let mean = x.row_mean().transpose();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let denom = (n.saturating_sub(1)).max(1) as f64;
    let cov = centered.transpose() * &centered / denom;
    (mean, cov)
}

fn clamped_eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let sym = (m + m.transpose()) * 0.5;
    let mut eig = SymmetricEigen::new(sym);
    let scale = eig.eigenvalues.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let min = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min < -EIGEN_CLAMP * scale {
        let mut spectrum: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        spectrum.sort_by(f64::total_cmp);
        return Err(Error::SingularCovariance {
            min_eigenvalue: min,
            spectrum,
        });
    }
    eig.eigenvalues.apply(|v| *v = v.max(0.0));
    Ok(eig)
}

/// `Tr((A B)^(1/2))` for symmetric PSD `A`, `B`, via the symmetric form
/// `A^(1/2) B A^(1/2)`.
pub fn trace_sqrt_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let ea = clamped_eigen(a)?;
    let root = &ea.eigenvectors
        * DMatrix::from_diagonal(&ea.eigenvalues.map(f64::sqrt))
        * ea.eigenvectors.transpose();
    let inner = &root * b * &root;
    let ei = clamped_eigen(&inner)?;
    Ok(ei.eigenvalues.iter().map(|v| v.sqrt()).sum())
}

/// `||mu_r - mu_f||^2 + Tr(S_r + S_f - 2 (S_r S_f)^(1/2))`, clamped at zero.
pub fn frechet_distance(real: &DMatrix<f64>, fake: &DMatrix<f64>) -> Result<f64> {
    if real.nrows() == 0 || fake.nrows() == 0 {
        return Err(Error::shape("FID needs non-empty embedding sets"));
    }
    if real.ncols() != fake.ncols() {
        return Err(Error::shape(format!(
            "embedding dims {} vs {}",
            real.ncols(),
            fake.ncols()
        )));
    }
    let d = real.ncols();
    if real.nrows() < d || fake.nrows() < d {
        log::warn!(
            "FID over {} / {} samples in {d} dimensions: covariance is rank-deficient",
            real.nrows(),
            fake.nrows()
        );
    }
    let (mu_r, cov_r) = mean_and_covariance(real);
    let (mu_f, cov_f) = mean_and_covariance(fake);
    let mean_term = (&mu_r - &mu_f).norm_squared();
    let cross = trace_sqrt_product(&cov_r, &cov_f)?;
    Ok((mean_term + cov_r.trace() + cov_f.trace() - 2.0 * cross).max(0.0))
}

pub fn fid(real: &[ImageTensor], fake: &[ImageTensor], fx: &dyn FeatureExtractor) -> Result<f64> {
    frechet_distance(&fx.embed(real)?, &fx.embed(fake)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shifted_identity_gaussians() {
        // Same covariance; FID reduces to the squared mean shift.
        let pts = [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]];
        let real = DMatrix::from_fn(4, 2, |i, j| pts[i][j]);
        let fake = DMatrix::from_fn(4, 2, |i, j| pts[i][j] + if j == 0 { 1.0 } else { 0.0 });
        assert!((frechet_distance(&real, &fake).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn identical_sets_are_zero() {
        let mut rng = SeededRng::new(5);
        let x = DMatrix::from_row_slice(40, 6, &rng.gaussian_vec(240, 0.0, 1.0));
        assert!(frechet_distance(&x, &x).unwrap() <= 1e-9);
    }

    #[test]
    fn strongly_indefinite_input_is_reported() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            trace_sqrt_product(&m, &m),
            Err(Error::SingularCovariance { .. })
        ));
    }

    #[test]
    fn projection_extractor_is_deterministic() {
        let img = ImageTensor::from_vec(
            (0..3 * 16 * 16)
                .map(|i| ((i % 7) as f32 / 7.0) - 0.5)
                .collect(),
            3,
            16,
            16,
        )
        .unwrap();
        let a = RandomProjection::stub()
            .embed(std::slice::from_ref(&img))
            .unwrap();
        let b = RandomProjection::stub().embed(&[img]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.ncols(), 64);
    }

    #[test]
    fn features_checkpoint_round_trip() {
        let mut ck = Checkpoint::new("features", serde_json::json!({"grid": 2}));
        ck.tensors.push(crate::nn::checkpoint::NamedTensor {
            name: "projection".into(),
            shape: vec![2, 12],
            data: TensorData::F64((0..24).map(|v| v as f64 / 24.0).collect()),
        });
        let fx =
            RandomProjection::from_checkpoint(&Checkpoint::decode(&ck.encode()).unwrap()).unwrap();
        assert_eq!(fx.dim(), 2);
        ck.tag = "generator".into();
        assert!(RandomProjection::from_checkpoint(&ck).is_err());
    }
}
