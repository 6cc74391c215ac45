//! Evaluation metrics: SSIM, PSNR, FID and provider-based face similarity.

pub mod fid;
pub mod quality;
pub mod report;
pub mod similarity;

pub use fid::{fid, frechet_distance, FeatureExtractor, RandomProjection};
pub use quality::{psnr, ssim, ssim_unit, UnitImage};
pub use report::{similarity_report, MetricsReport, PairScore};
pub use similarity::{LocalEmbeddingSimilarity, RemoteSimilarity, SimilarityProvider};
