//! Image access for training batches.

use std::path::{Path, PathBuf};

use candle_core::Tensor;

use crate::data::{DatasetManifest, Split, IMAGES_DIR};
use crate::error::{Error, Result};
use crate::image_tensor::ImageTensor;

/// Returns the image for a manifest record index.
pub trait ImageSource: Send + Sync {
    fn image(&self, record: usize) -> Result<ImageTensor>;
}

/// Reads `images/<id>.png` beneath a prepared dataset directory on demand.
pub struct DiskImages {
    dir: PathBuf,
    files: Vec<String>,
    size: u32,
}

impl DiskImages {
    pub fn new(dataset_dir: &Path, manifest: &DatasetManifest) -> Self {
        Self {
            dir: dataset_dir.join(IMAGES_DIR),
            files: manifest.records.iter().map(|r| r.image_file()).collect(),
            size: manifest.image_size,
        }
    }
}

impl ImageSource for DiskImages {
    fn image(&self, record: usize) -> Result<ImageTensor> {
        let file = self
            .files
            .get(record)
            .ok_or_else(|| Error::InvalidConfig(format!("record {record} out of range")))?;
        ImageTensor::load(&self.dir.join(file), Some(self.size))
    }
}

/// Preloaded images, indexed like the manifest's records.
pub struct MemoryImages(pub Vec<ImageTensor>);

impl ImageSource for MemoryImages {
    fn image(&self, record: usize) -> Result<ImageTensor> {
        self.0
            .get(record)
            .cloned()
            .ok_or_else(|| Error::InvalidConfig(format!("record {record} out of range")))
    }
}

/// `N x C x H x W` tensors for one pix2pix step.
#[derive(Debug, Clone)]
pub struct PairBatch {
    pub side: Tensor,
    pub frontal: Tensor,
}

/// `N x C x H x W` tensors for one pairwise step.
#[derive(Debug, Clone)]
pub struct TripletBatch {
    pub left: Tensor,
    pub right: Tensor,
    pub frontal: Tensor,
}

/// Training samples as record-index tuples: `[side, frontal]` for pairs,
/// `[left, right, frontal]` for triplets.
pub fn training_samples(manifest: &DatasetManifest, pairwise: bool) -> Vec<Vec<usize>> {
    if pairwise {
        manifest
            .triplets_in(Split::Train)
            .map(|t| vec![t.left, t.right, t.frontal])
            .collect()
    } else {
        manifest
            .pairs_in(Split::Train)
            .map(|p| vec![p.side, p.frontal])
            .collect()
    }
}

/// Stacks slot `k` of every sample into a batch.
pub fn stack_slot(images: &dyn ImageSource, samples: &[&[usize]], k: usize) -> Result<Tensor> {
    let imgs = samples
        .iter()
        .map(|s| images.image(s[k]))
        .collect::<Result<Vec<_>>>()?;
    ImageTensor::stack(&imgs)
}
