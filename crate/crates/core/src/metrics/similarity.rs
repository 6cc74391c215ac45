//! Face similarity providers scoring image pairs on `[0, 100]`.
//!
//! The local default compares mean-centered pooled appearance vectors; its
//! scale is not comparable to commercial face-verification scores.

use std::io::Cursor;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde_json::{json, Value};

use super::fid::pooled_features;
use crate::error::{Error, Result};
use crate::image_tensor::ImageTensor;

pub trait SimilarityProvider: Send + Sync {
    fn name(&self) -> &str;
    fn compare(&self, a: &ImageTensor, b: &ImageTensor) -> Result<f64>;
}

/// `50 (1 + cos)` between mean-centered `grid x grid` average-pooled vectors.
#[derive(Debug, Clone, Copy)]
pub struct LocalEmbeddingSimilarity {
    pub grid: usize,
}

impl Default for LocalEmbeddingSimilarity {
    fn default() -> Self {
        Self { grid: 16 }
    }
}

impl LocalEmbeddingSimilarity {
    pub fn embed(&self, img: &ImageTensor) -> Result<Vec<f64>> {
        let mut v = pooled_features(img, self.grid)?;
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.iter_mut().for_each(|x| *x -= mean);
        Ok(v)
    }
}

pub fn cosine_score(a: &[f64], b: &[f64]) -> f64 {
    if a == b {
        return 100.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 50.0;
    }
    (50.0 * (1.0 + dot / (na * nb))).clamp(0.0, 100.0)
}

impl SimilarityProvider for LocalEmbeddingSimilarity {
    fn name(&self) -> &str {
        "local"
    }

    fn compare(&self, a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
        if a.dims() != b.dims() {
            return Err(Error::shape(format!("{:?} vs {:?}", a.dims(), b.dims())));
        }
        Ok(cosine_score(&self.embed(a)?, &self.embed(b)?))
    }
}

/// Blocking token bucket: `capacity` burst, refilled at `per_second`.
#[derive(Debug)]
pub struct TokenBucket {
    capacity: f64,
    per_second: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    pub fn new(capacity: u32, per_second: f64) -> Self {
        let capacity = f64::from(capacity.max(1));
        Self {
            capacity,
            per_second: per_second.max(1e-3),
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut s = self.state.lock().unwrap_or_else(|p| p.into_inner());
                let now = Instant::now();
                s.0 = (s.0 + now.duration_since(s.1).as_secs_f64() * self.per_second)
                    .min(self.capacity);
                s.1 = now;
                if s.0 >= 1.0 {
                    s.0 -= 1.0;
                    return;
                }
                (1.0 - s.0) / self.per_second
            };
            std::thread::sleep(Duration::from_secs_f64(wait));
        }
    }
}

pub const REMOTE_URL_VAR: &str = "FRONTALIZE_SIMILARITY_URL";
pub const REMOTE_KEY_VAR: &str = "FRONTALIZE_SIMILARITY_KEY";

/// Generic HTTP comparison client.
///
/// POSTs `{"image_a": <base64 png>, "image_b": <base64 png>}` with a bearer
/// key and reads a numeric `score` (or `confidence`) field from the JSON
/// reply. Endpoint and key come from the environment only.
pub struct RemoteSimilarity {
    url: String,
    key: String,
    bucket: TokenBucket,
    timeout: Duration,
}

impl RemoteSimilarity {
    pub fn from_env(rate_per_second: f64) -> Result<Self> {
        let var = |k: &str| {
            std::env::var(k)
                .map_err(|_| Error::InvalidConfig(format!("environment variable {k} is not set")))
        };
        Ok(Self {
            url: var(REMOTE_URL_VAR)?,
            key: var(REMOTE_KEY_VAR)?,
            bucket: TokenBucket::new(1, rate_per_second),
            timeout: Duration::from_secs(30),
        })
    }

    fn encode(img: &ImageTensor) -> Result<String> {
        let mut buf = Cursor::new(Vec::new());
        img.to_rgb()?
            .write_to(&mut buf, image::ImageFormat::Png)
            .map_err(|e| Error::ProviderFailure(format!("png encode: {e}")))?;
        Ok(BASE64.encode(buf.into_inner()))
    }
}

/// Reads the score from a provider reply.
pub fn parse_remote_score(body: &Value) -> Result<f64> {
    let score = body
        .get("score")
        .or_else(|| body.get("confidence"))
        .and_then(Value::as_f64)
        .ok_or_else(|| Error::ProviderFailure(format!("reply has no numeric score: {body}")))?;
    if !(0.0..=100.0).contains(&score) {
        return Err(Error::ProviderFailure(format!(
            "score {score} outside [0, 100]"
        )));
    }
    Ok(score)
}

impl SimilarityProvider for RemoteSimilarity {
    fn name(&self) -> &str {
        "remote"
    }

    fn compare(&self, a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
        self.bucket.acquire();
        let body = json!({ "image_a": Self::encode(a)?, "image_b": Self::encode(b)? });
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .build()
            .into();
        let mut resp = agent
            .post(&self.url)
            .header("Authorization", format!("Bearer {}", self.key))
            .send_json(&body)
            .map_err(|e| Error::ProviderFailure(e.to_string()))?;
        let reply: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| Error::ProviderFailure(e.to_string()))?;
        parse_remote_score(&reply)
    }
}
