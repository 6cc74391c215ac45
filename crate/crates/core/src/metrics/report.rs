//! Aggregated evaluation over `(generated, ground truth)` pairs.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use super::fid::{fid, FeatureExtractor};
use super::quality::{mse_unit, psnr_from_mse, ssim_unit, UnitImage};
use super::similarity::SimilarityProvider;
use crate::error::{Error, Result};
use crate::image_tensor::ImageTensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairScore {
    pub index: usize,
    pub similarity: f64,
    pub ssim: f64,
    pub psnr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub provider: String,
    pub avg_sim: f64,
    pub max_sim: f64,
    pub min_sim: f64,
    pub ssim: f64,
    pub fid: f64,
    pub psnr: f64,
    /// Pairs that contributed to the report.
    pub n: usize,
    /// Pairs skipped because the provider failed on them.
    pub failures: usize,
    pub pairs: Vec<PairScore>,
}

/// Scores every pair; provider failures are logged, counted and skipped.
/// `parallelism` bounds concurrent provider calls.
pub fn similarity_report(
    pairs: &[(ImageTensor, ImageTensor)],
    provider: &dyn SimilarityProvider,
    fx: &dyn FeatureExtractor,
    parallelism: usize,
) -> Result<MetricsReport> {
    if pairs.is_empty() {
        return Err(Error::InvalidConfig(
            "similarity report over an empty pair list".into(),
        ));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let sims: Vec<Result<f64>> = pool.install(|| {
        pairs
            .par_iter()
            .map(|(g, t)| provider.compare(g, t))
            .collect()
    });

    let mut kept = Vec::new();
    let mut scores = Vec::new();
    let mut failures = 0;
    for (i, sim) in sims.into_iter().enumerate() {
        match sim {
            Ok(s) => {
                let (g, t) = &pairs[i];
                let (ug, ut) = (UnitImage::from_tensor(g)?, UnitImage::from_tensor(t)?);
                scores.push(PairScore {
                    index: i,
                    similarity: s,
                    ssim: ssim_unit(&ug, &ut)?,
                    psnr: psnr_from_mse(mse_unit(&ug, &ut)?),
                });
                kept.push(i);
            }
            Err(e) => {
                log::warn!("pair {i}: skipped, {e}");
                failures += 1;
            }
        }
    }
    if scores.is_empty() {
        return Err(Error::ProviderFailure(format!(
            "all {failures} pairs failed"
        )));
    }
    let n = scores.len();
    let mean = |f: fn(&PairScore) -> f64| scores.iter().map(f).sum::<f64>() / n as f64;
    let generated: Vec<ImageTensor> = kept.iter().map(|&i| pairs[i].0.clone()).collect();
    let truth: Vec<ImageTensor> = kept.iter().map(|&i| pairs[i].1.clone()).collect();
    Ok(MetricsReport {
        provider: provider.name().to_string(),
        avg_sim: mean(|p| p.similarity),
        max_sim: scores
            .iter()
            .map(|p| p.similarity)
            .fold(f64::NEG_INFINITY, f64::max),
        min_sim: scores
            .iter()
            .map(|p| p.similarity)
            .fold(f64::INFINITY, f64::min),
        ssim: mean(|p| p.ssim),
        fid: fid(&truth, &generated, fx)?,
        psnr: mean(|p| p.psnr),
        n,
        failures,
        pairs: scores,
    })
}

/// JSON has no infinities; they are written as `"+Inf"`.
fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v > 0.0 {
        json!("+Inf")
    } else if v < 0.0 {
        json!("-Inf")
    } else {
        json!("NaN")
    }
}

fn fmt_num(v: f64, digits: usize) -> String {
    if v.is_finite() {
        format!("{v:.digits$}")
    } else if v > 0.0 {
        "+Inf".into()
    } else {
        v.to_string()
    }
}

impl MetricsReport {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "similarity provider: {} (scale differs from commercial APIs)",
            self.provider
        );
        let _ = writeln!(
            s,
            "{:>8} | {:>8} | {:>8} | {:>6} | {:>9} | {:>8}",
            "Avg", "Max", "Min", "SSIM", "FID", "PSNR"
        );
        let _ = writeln!(
            s,
            "{:>8} | {:>8} | {:>8} | {:>6} | {:>9} | {:>8}",
            fmt_num(self.avg_sim, 2),
            fmt_num(self.max_sim, 2),
            fmt_num(self.min_sim, 2),
            fmt_num(self.ssim, 3),
            fmt_num(self.fid, 3),
            fmt_num(self.psnr, 3)
        );
        let _ = writeln!(s, "pairs: {} scored, {} skipped", self.n, self.failures);
        s
    }

    /// One record per pair followed by a summary record.
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for p in &self.pairs {
            let rec = json!({
                "kind": "pair", "index": p.index, "similarity": num(p.similarity),
                "ssim": num(p.ssim), "psnr": num(p.psnr),
            });
            let _ = writeln!(s, "{rec}");
        }
        let summary = json!({
            "kind": "summary", "provider": self.provider,
            "avg_sim": num(self.avg_sim), "max_sim": num(self.max_sim), "min_sim": num(self.min_sim),
            "ssim": num(self.ssim), "fid": num(self.fid), "psnr": num(self.psnr),
            "n": self.n, "failures": self.failures,
        });
        let _ = writeln!(s, "{summary}");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::fid::RandomProjection;
    use crate::metrics::similarity::LocalEmbeddingSimilarity;

    struct FailsOn(usize, LocalEmbeddingSimilarity);

    impl SimilarityProvider for FailsOn {
        fn name(&self) -> &str {
            "flaky"
        }
        fn compare(&self, a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
            let first = a.to_vec()?[0];
            if first == self.0 as f32 * 0.1 {
                return Err(Error::ProviderFailure("boom".into()));
            }
            self.1.compare(a, b)
        }
    }

    fn img(v: f32) -> ImageTensor {
        let data = (0..3 * 16 * 16)
            .map(|i| {
                if i == 0 {
                    v
                } else {
                    ((i % 13) as f32 / 13.0) - 0.5
                }
            })
            .collect();
        ImageTensor::from_vec(data, 3, 16, 16).unwrap()
    }

    #[test]
    fn failures_are_skipped_and_counted() {
        let pairs: Vec<_> = (0..3).map(|i| (img(i as f32 * 0.1), img(0.9))).collect();
        let r = similarity_report(
            &pairs,
            &FailsOn(1, LocalEmbeddingSimilarity { grid: 4 }),
            &RandomProjection::stub(),
            2,
        )
        .unwrap();
        assert_eq!((r.n, r.failures), (2, 1));
        assert!(r.min_sim <= r.avg_sim && r.avg_sim <= r.max_sim);
        assert_eq!(r.to_jsonl().lines().count(), 3);
    }

    #[test]
    fn non_finite_values_render() {
        assert_eq!(num(f64::INFINITY), json!("+Inf"));
        assert_eq!(fmt_num(f64::INFINITY, 3), "+Inf");
    }
}
