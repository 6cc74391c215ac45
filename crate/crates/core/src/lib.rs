//! Face frontalization with paired U-Net GANs.
//!
//! The crate covers the whole pipeline: corpus ingestion ([`data`]),
//! generator and discriminator networks ([`nn`]), the composite training
//! objective ([`losses`]), the alternating optimizer loop ([`train`]) and
//! evaluation metrics ([`metrics`]).

pub mod data;
pub mod error;
pub mod image_tensor;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod train;
pub mod util;

pub use error::{Error, Result};
pub use image_tensor::ImageTensor;
