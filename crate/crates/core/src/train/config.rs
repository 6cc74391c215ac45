//! Training configuration, loadable from a TOML file.
//!
//! ```toml
//! mode = "pairwise"
//! epochs = 250
//! preset = "pairwise-best-overall"
//! seed = 7
//!
//! [generator]
//! base_width = 64
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{named_preset, GdlConfig, LossWeights, TrainMode, WeightSchedule};
use crate::nn::{AdamConfig, PatchDiscConfig, SharingSpec, UNetConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DeviceKind {
    #[default]
    Cpu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub adam_betas: (f64, f64),
    /// Named loss preset; mutually exclusive with `weights`.
    pub preset: Option<String>,
    pub weights: Option<LossWeights>,
    /// Final-epoch weights for a linear decay from `weights`.
    pub weights_end: Option<LossWeights>,
    /// Overrides the preset's sharing flag when set.
    pub sharing: Option<bool>,
    /// Which blocks are tied when sharing is on.
    pub share: SharingSpec,
    pub seed: u64,
    pub checkpoint_every: usize,
    pub device: DeviceKind,
    pub generator: UNetConfig,
    pub discriminator: PatchDiscConfig,
    pub gdl: GdlConfig,
    /// Scale the discriminator loss by 1/2.
    pub halve_d_loss: bool,
    /// Give G2 its own discriminator in pairwise mode.
    pub two_discriminators: bool,
    /// Stop after this many optimizer steps.
    pub max_steps: Option<usize>,
    /// Overfit smoke mode: train on only the first `n` samples.
    pub overfit_samples: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Pairwise,
            epochs: 250,
            batch_size: 1,
            lr: 2e-4,
            adam_betas: (0.5, 0.999),
            preset: Some("pairwise-best-overall".into()),
            weights: None,
            weights_end: None,
            sharing: None,
            share: SharingSpec::decoder_head(),
            seed: 0,
            checkpoint_every: 10,
            device: DeviceKind::Cpu,
            generator: UNetConfig::default(),
            discriminator: PatchDiscConfig::default(),
            gdl: GdlConfig::default(),
            halve_d_loss: true,
            two_discriminators: false,
            max_steps: None,
            overfit_samples: None,
        }
    }
}

pub const PAPER_PRESETS: [&str; 2] = ["paper-pairwise", "paper-pix2pix"];

/// Weights and sharing after preset resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedLoss {
    pub schedule: WeightSchedule,
    pub sharing: SharingSpec,
}

impl TrainConfig {
    /// Full-scale schedules: pairwise 250 epochs over triplets, pix2pix
    /// 125 epochs over pairs, both batch 1 at lr 2e-4.
    pub fn named_schedule(name: &str) -> Option<Self> {
        match name {
            "paper-pairwise" => Some(Self::default()),
            "paper-pix2pix" => Some(Self {
                mode: TrainMode::Pix2pix,
                epochs: 125,
                preset: Some("pix2pix-best".into()),
                ..Self::default()
            }),
            _ => None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(format!("train config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.adam_betas.0,
            beta2: self.adam_betas.1,
            ..AdamConfig::default()
        }
    }

    pub fn resolve_loss(&self) -> Result<ResolvedLoss> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let (schedule, preset_sharing) = match (&self.preset, &self.weights) {
            (Some(_), Some(_)) => return bad("give either `preset` or `weights`, not both".into()),
            (None, None) => return bad("one of `preset` or `weights` is required".into()),
            (Some(name), None) => {
                if self.weights_end.is_some() {
                    return bad("`weights_end` needs explicit `weights`".into());
                }
                let p = named_preset(name)
                    .ok_or_else(|| Error::InvalidConfig(format!("unknown preset `{name}`")))?;
                if p.mode != self.mode {
                    return bad(format!(
                        "preset `{name}` is for {:?} mode, config is {:?}",
                        p.mode, self.mode
                    ));
                }
                (p.schedule, p.sharing)
            }
            (None, Some(w)) => (
                WeightSchedule {
                    start: *w,
                    end: self.weights_end,
                },
                false,
            ),
        };
        schedule.validate()?;
        let sharing = self.sharing.unwrap_or(preset_sharing);
        if sharing && self.mode == TrainMode::Pix2pix {
            return bad("weight sharing needs pairwise mode".into());
        }
        if self.mode == TrainMode::Pix2pix && schedule.start.pair > 0.0 {
            return bad("pair loss needs pairwise mode".into());
        }
        let sharing = if sharing {
            self.share
        } else {
            SharingSpec::none()
        };
        if self.sharing == Some(true) && !sharing.enabled() {
            return bad("sharing enabled with `share.count = 0`".into());
        }
        sharing.validate(&self.generator)?;
        Ok(ResolvedLoss { schedule, sharing })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        let (b1, b2) = self.adam_betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return bad("adam betas must lie in [0, 1)");
        }
        if self.checkpoint_every == 0 {
            return bad("checkpoint_every must be at least 1");
        }
        if self.gdl.alpha == 0 {
            return bad("gdl.alpha must be at least 1");
        }
        if self.max_steps == Some(0) || self.overfit_samples == Some(0) {
            return bad("max_steps and overfit_samples must be positive when set");
        }
        if self.two_discriminators && self.mode == TrainMode::Pix2pix {
            return bad("two_discriminators needs pairwise mode");
        }
        self.generator.validate()?;
        self.discriminator.validate()?;
        if self.discriminator.image_channels != self.generator.out_channels {
            return bad("discriminator image_channels must equal generator out_channels");
        }
        if self.discriminator.conditional
            && self.generator.in_channels != self.generator.out_channels
        {
            return bad("conditional discriminator needs equal generator in/out channels");
        }
        self.resolve_loss()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_presets() {
        let p = TrainConfig::named_schedule("paper-pairwise").unwrap();
        assert_eq!((p.epochs, p.batch_size, p.lr), (250, 1, 2e-4));
        assert_eq!(p.mode, TrainMode::Pairwise);
        let q = TrainConfig::named_schedule("paper-pix2pix").unwrap();
        assert_eq!((q.epochs, q.mode), (125, TrainMode::Pix2pix));
        for name in PAPER_PRESETS {
            TrainConfig::named_schedule(name)
                .unwrap()
                .validate()
                .unwrap();
        }
    }

    #[test]
    fn toml_round_trip_and_rejections() {
        let cfg = TrainConfig::default();
        assert_eq!(TrainConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        let partial = TrainConfig::from_toml("epochs = 3\nseed = 9\n[generator]\nbase_width = 8\nencoder_blocks = 6\ndecoder_blocks = 6\n").unwrap();
        assert_eq!(
            (partial.epochs, partial.seed, partial.generator.base_width),
            (3, 9, 8)
        );
        assert!(TrainConfig::from_toml("epochs = 0").is_err());
        assert!(TrainConfig::from_toml("lr = -1.0").is_err());
        assert!(TrainConfig::from_toml("bogus = 1").is_err());
        assert!(
            TrainConfig::from_toml("mode = \"pix2pix\"").is_err(),
            "pairwise preset in pix2pix mode"
        );
        assert!(TrainConfig::from_toml("preset = \"pairwise-share\"\nsharing = false").is_ok());
    }

    #[test]
    fn explicit_weights_with_decay() {
        let cfg = TrainConfig {
            preset: None,
            weights: Some(LossWeights::new(1., 0., 0., 0., 10., 10.)),
            weights_end: Some(LossWeights::new(1., 0., 0., 0., 5., 2.)),
            sharing: Some(true),
            ..TrainConfig::default()
        };
        let r = cfg.resolve_loss().unwrap();
        assert!(r.sharing.enabled());
        assert_eq!(r.schedule.at(cfg.epochs, cfg.epochs).pair, 2.0);
    }
}
