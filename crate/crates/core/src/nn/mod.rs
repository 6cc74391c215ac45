//! Networks: U-Net generators, PatchGAN discriminator, optimizer and
//! checkpoint container.

pub mod adam;
pub mod checkpoint;
pub mod layers;
pub mod params;
pub mod patch;
pub mod unet;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::Checkpoint;
pub use layers::{Mode, NormKind};
pub use params::ParamStore;
pub use patch::{receptive_field, PatchDiscConfig, PatchDiscriminator, PatchGrid};
pub use unet::{PairwiseGenerator, ShareSite, ShareUnit, SharingSpec, UNetConfig, UNetGenerator};

use candle_core::DType;
use serde_json::json;

use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub const GENERATOR_TAG: &str = "generator";
pub const DISCRIMINATOR_TAG: &str = "discriminator";

impl UNetGenerator {
    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = Checkpoint::new(GENERATOR_TAG, json!({ "config": self.config() }));
        ck.push_store("", self.params())?;
        Ok(ck)
    }

    /// Loads parameters after checking the stored config matches this network's.
    pub fn load_checkpoint(&self, ck: &Checkpoint) -> Result<()> {
        if ck.tag != GENERATOR_TAG {
            return Err(Error::Checkpoint(format!(
                "expected a generator checkpoint, found `{}`",
                ck.tag
            )));
        }
        let stored: UNetConfig = serde_json::from_value(ck.metadata["config"].clone())
            .map_err(|e| Error::Checkpoint(format!("generator config: {e}")))?;
        if &stored != self.config() {
            return Err(Error::Checkpoint(format!(
                "config mismatch: checkpoint {stored:?}, model {:?}",
                self.config()
            )));
        }
        ck.load_into("", self.params())
    }

    /// Builds an `f32` generator with the stored config and weights.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let g = Self::new(
            Self::config_from_checkpoint(ck)?,
            &mut SeededRng::new(0),
            DType::F32,
        )?;
        g.load_checkpoint(ck)?;
        Ok(g)
    }

    pub fn config_from_checkpoint(ck: &Checkpoint) -> Result<UNetConfig> {
        serde_json::from_value(ck.metadata["config"].clone())
            .map_err(|e| Error::Checkpoint(format!("generator config: {e}")))
    }
}

impl PatchDiscriminator {
    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = Checkpoint::new(DISCRIMINATOR_TAG, json!({ "config": self.config() }));
        ck.push_store("", self.params())?;
        Ok(ck)
    }

    pub fn load_checkpoint(&self, ck: &Checkpoint) -> Result<()> {
        if ck.tag != DISCRIMINATOR_TAG {
            return Err(Error::Checkpoint(format!(
                "expected a discriminator checkpoint, found `{}`",
                ck.tag
            )));
        }
        let stored: PatchDiscConfig = serde_json::from_value(ck.metadata["config"].clone())
            .map_err(|e| Error::Checkpoint(format!("discriminator config: {e}")))?;
        if &stored != self.config() {
            return Err(Error::Checkpoint("discriminator config mismatch".into()));
        }
        ck.load_into("", self.params())
    }
}

impl PairwiseGenerator {
    /// Loads both branches and rejects checkpoints whose shared blocks differ.
    pub fn load_checkpoints(&self, left: &Checkpoint, right: &Checkpoint) -> Result<()> {
        self.left.load_checkpoint(left)?;
        for name in self.shared_param_names() {
            let (Some(a), Some(b)) = (left.get(&name), right.get(&name)) else {
                return Err(Error::Checkpoint(format!(
                    "checkpoint lacks shared parameter `{name}`"
                )));
            };
            if a.data != b.data {
                return Err(Error::SharingViolated {
                    name,
                    max_diff: f64::NAN,
                });
            }
        }
        self.right.load_checkpoint(right)
    }
}
