//! U-Net generator and the two-branch Pairwise generator.
//!
//! Encoder block `k` is `conv(4, s2, p1) -> norm -> LeakyReLU(0.2)`; decoder
//! block `i` is `convT(4, s2, p1) -> norm -> [dropout] -> ReLU` and takes
//! the previous decoder output concatenated with encoder block `n + 1 - i`.
//! The last decoder block is the `tanh` output head. The first and innermost
//! encoder blocks and the head carry a bias instead of a norm: at the 1x1
//! bottleneck a norm would erase the signal.

use std::collections::BTreeSet;

use candle_core::{DType, Tensor};
use serde::{Deserialize, Serialize};

use super::layers::{dropout, leaky_relu, Conv2d, ConvTranspose2d, Mode, Norm, NormKind};
use super::params::{ParamBuilder, ParamStore};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UNetConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    pub base_width: usize,
    pub encoder_blocks: usize,
    pub decoder_blocks: usize,
    pub norm: NormKind,
    /// Decoder blocks `1..=dropout_blocks` apply dropout in training mode.
    pub dropout_blocks: usize,
    pub dropout_rate: f64,
}

impl Default for UNetConfig {
    fn default() -> Self {
        Self {
            in_channels: 3,
            out_channels: 3,
            base_width: 64,
            encoder_blocks: 8,
            decoder_blocks: 8,
            norm: NormKind::Instance,
            dropout_blocks: 3,
            dropout_rate: 0.5,
        }
    }
}

impl UNetConfig {
    pub fn pix2pix() -> Self {
        Self {
            norm: NormKind::Batch,
            ..Self::default()
        }
    }

    /// Desk-scale generator: `blocks` levels, `base_width` 8.
    pub fn tiny(blocks: usize) -> Self {
        Self {
            base_width: 8,
            encoder_blocks: blocks,
            decoder_blocks: blocks,
            dropout_blocks: blocks.min(3),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("U-Net: {m}")));
        if self.encoder_blocks != self.decoder_blocks {
            return bad("encoder and decoder block counts must match");
        }
        if self.encoder_blocks < 2 {
            return bad("at least two blocks are required");
        }
        if self.encoder_blocks > 16 {
            return bad("more than 16 blocks is not supported");
        }
        if self.dropout_blocks > self.decoder_blocks {
            return bad("dropout_blocks exceeds decoder_blocks");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must lie in [0, 1)");
        }
        if self.in_channels == 0 || self.out_channels == 0 || self.base_width == 0 {
            return bad("channel counts must be positive");
        }
        Ok(())
    }

    /// Output width of encoder block `k` (1-based): base * min(2^(k-1), 8).
    pub fn encoder_width(&self, k: usize) -> usize {
        self.base_width * (1usize << (k - 1).min(3))
    }

    /// Input channels of decoder block `i` (1-based).
    pub fn decoder_in(&self, i: usize) -> usize {
        let n = self.encoder_blocks;
        if i == 1 {
            self.encoder_width(n)
        } else {
            self.decoder_out(i - 1) + self.encoder_width(n + 1 - i)
        }
    }

    /// Output channels of decoder block `i` (1-based).
    pub fn decoder_out(&self, i: usize) -> usize {
        let n = self.encoder_blocks;
        if i == n {
            self.out_channels
        } else {
            self.encoder_width(n - i)
        }
    }

    /// The smallest spatial size the network accepts; inputs must be multiples.
    pub fn spatial_factor(&self) -> usize {
        1 << self.encoder_blocks
    }

    pub fn check_input(&self, dims: &[usize]) -> Result<()> {
        let [_, c, h, w] = dims else {
            return Err(Error::shape(format!(
                "expected N x C x H x W, got {dims:?}"
            )));
        };
        let f = self.spatial_factor();
        if *c != self.in_channels {
            return Err(Error::shape(format!(
                "expected {} input channels, got {c}",
                self.in_channels
            )));
        }
        if h % f != 0 || w % f != 0 || *h == 0 || *w == 0 {
            return Err(Error::shape(format!(
                "spatial size {h}x{w} is not a multiple of 2^{} = {f}",
                self.encoder_blocks
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct EncoderBlock {
    conv: Conv2d,
    norm: Norm,
}

#[derive(Debug, Clone)]
struct DecoderBlock {
    conv: ConvTranspose2d,
    norm: Norm,
    dropout: bool,
    head: bool,
}

/// A U-Net generator with a `tanh` output head.
#[derive(Debug, Clone)]
pub struct UNetGenerator {
    config: UNetConfig,
    encoder: Vec<EncoderBlock>,
    decoder: Vec<DecoderBlock>,
    store: ParamStore,
}

/// Parameter-name prefix of encoder block `k`.
pub fn encoder_prefix(k: usize) -> String {
    format!("enc.{k}")
}

/// Parameter-name prefix of decoder block `i`.
pub fn decoder_prefix(i: usize) -> String {
    format!("dec.{i}")
}

impl UNetGenerator {
    pub fn new(config: UNetConfig, rng: &mut SeededRng, dtype: DType) -> Result<Self> {
        let mut pb = ParamBuilder::new(rng, dtype);
        let g = Self::build(config, &mut pb)?;
        Ok(Self {
            store: pb.finish(),
            ..g
        })
    }

    fn build(config: UNetConfig, pb: &mut ParamBuilder) -> Result<Self> {
        config.validate()?;
        let n = config.encoder_blocks;
        let mut encoder = Vec::with_capacity(n);
        for k in 1..=n {
            let c_in = if k == 1 {
                config.in_channels
            } else {
                config.encoder_width(k - 1)
            };
            let c_out = config.encoder_width(k);
            let edge = k == 1 || k == n;
            let name = encoder_prefix(k);
            let conv = Conv2d::new(pb, &format!("{name}.conv"), c_in, c_out, 4, 2, 1, edge)?;
            let norm = Norm::new(
                pb,
                &format!("{name}.norm"),
                (!edge).then_some(config.norm),
                c_out,
            )?;
            encoder.push(EncoderBlock { conv, norm });
        }
        let mut decoder = Vec::with_capacity(n);
        for i in 1..=n {
            let head = i == n;
            let name = decoder_prefix(i);
            let (c_in, c_out) = (config.decoder_in(i), config.decoder_out(i));
            let conv =
                ConvTranspose2d::new(pb, &format!("{name}.conv"), c_in, c_out, 4, 2, 1, head)?;
            let norm = Norm::new(
                pb,
                &format!("{name}.norm"),
                (!head).then_some(config.norm),
                c_out,
            )?;
            let dropout = !head && i <= config.dropout_blocks;
            decoder.push(DecoderBlock {
                conv,
                norm,
                dropout,
                head,
            });
        }
        Ok(Self {
            config,
            encoder,
            decoder,
            store: ParamStore::default(),
        })
    }

    /// Builds a generator whose parameters accepted by `shared` alias `source`'s.
    pub fn new_sharing(
        config: UNetConfig,
        rng: &mut SeededRng,
        dtype: DType,
        source: &ParamStore,
        shared: &dyn Fn(&str) -> bool,
    ) -> Result<Self> {
        let mut pb = ParamBuilder::new(rng, dtype).sharing_with(source, shared);
        let g = Self::build(config, &mut pb)?;
        Ok(Self {
            store: pb.finish(),
            ..g
        })
    }

    pub fn config(&self) -> &UNetConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn count_parameters(&self) -> usize {
        self.store.trainable_count()
    }

    /// `x` is `N x C x H x W` (or `C x H x W`) in `[-1, 1]`.
    pub fn forward(&self, x: &Tensor, mode: &mut Mode) -> Result<Tensor> {
        let unbatched = x.rank() == 3;
        let x = if unbatched {
            x.unsqueeze(0)?
        } else {
            x.clone()
        };
        self.config.check_input(x.dims())?;
        let train = mode.is_train();
        let mut skips = Vec::with_capacity(self.encoder.len());
        let mut h = x;
        for block in &self.encoder {
            h = leaky_relu(&block.norm.forward(&block.conv.forward(&h)?, train)?)?;
            skips.push(h.clone());
        }
        let n = self.encoder.len();
        for (idx, block) in self.decoder.iter().enumerate() {
            let i = idx + 1;
            let input = if i == 1 {
                h.clone()
            } else {
                Tensor::cat(&[&h, &skips[n - i]], 1)?
            };
            let y = block.norm.forward(&block.conv.forward(&input)?, train)?;
            h = if block.head {
                y.tanh()?
            } else {
                let y = if block.dropout {
                    dropout(&y, self.config.dropout_rate, mode)?
                } else {
                    y
                };
                y.relu()?
            };
        }
        Ok(if unbatched { h.squeeze(0)? } else { h })
    }
}

/// Where a Pairwise generator ties its two branches together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ShareSite {
    /// The first decoder blocks after the bottleneck.
    #[default]
    DecoderHead,
    /// The innermost encoder blocks.
    EncoderTail,
}

/// Whether `count` refers to whole blocks or to individual parameterised layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ShareUnit {
    #[default]
    Blocks,
    Layers,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SharingSpec {
    pub count: usize,
    pub site: ShareSite,
    pub unit: ShareUnit,
}

impl Default for SharingSpec {
    fn default() -> Self {
        Self::none()
    }
}

impl SharingSpec {
    pub fn none() -> Self {
        Self {
            count: 0,
            site: ShareSite::DecoderHead,
            unit: ShareUnit::Blocks,
        }
    }

    /// The first two decoder blocks, D1 and D2.
    pub fn decoder_head() -> Self {
        Self {
            count: 2,
            ..Self::none()
        }
    }

    pub fn enabled(&self) -> bool {
        self.count > 0
    }

    /// Layer prefixes (`dec.1.conv`, ...) covered by this spec.
    pub fn shared_layers(&self, config: &UNetConfig) -> BTreeSet<String> {
        let n = config.encoder_blocks;
        let blocks: Vec<String> = match self.site {
            ShareSite::DecoderHead => (1..n).map(decoder_prefix).collect(),
            ShareSite::EncoderTail => (2..=n).rev().map(encoder_prefix).collect(),
        };
        // A block's parameterised layers, in forward order.
        let layers_of = |block: &str| {
            let mut v = vec![format!("{block}.conv")];
            let has_norm_params = config.norm == NormKind::Batch && !(block == encoder_prefix(n));
            if has_norm_params {
                v.push(format!("{block}.norm"));
            }
            v
        };
        match self.unit {
            ShareUnit::Blocks => blocks
                .iter()
                .take(self.count)
                .flat_map(|b| layers_of(b))
                .collect(),
            ShareUnit::Layers => blocks
                .iter()
                .flat_map(|b| layers_of(b))
                .take(self.count)
                .collect(),
        }
    }

    pub fn validate(&self, config: &UNetConfig) -> Result<()> {
        let limit = config.encoder_blocks - 1;
        if self.unit == ShareUnit::Blocks && self.count > limit {
            return Err(Error::InvalidConfig(format!(
                "cannot share {} of {limit} shareable blocks",
                self.count
            )));
        }
        Ok(())
    }
}

/// Two U-Nets, G1 for left-side inputs and G2 for right-side inputs.
#[derive(Debug, Clone)]
pub struct PairwiseGenerator {
    pub left: UNetGenerator,
    pub right: UNetGenerator,
    sharing: SharingSpec,
    shared_layers: BTreeSet<String>,
}

fn layer_of(param: &str) -> &str {
    param.rsplit_once('.').map(|(l, _)| l).unwrap_or(param)
}

impl PairwiseGenerator {
    pub fn new(
        config: UNetConfig,
        sharing: SharingSpec,
        rng: &mut SeededRng,
        dtype: DType,
    ) -> Result<Self> {
        sharing.validate(&config)?;
        let left = UNetGenerator::new(config.clone(), rng, dtype)?;
        let shared_layers = sharing.shared_layers(&config);
        let is_shared = |name: &str| shared_layers.contains(layer_of(name));
        let right = UNetGenerator::new_sharing(config, rng, dtype, left.params(), &is_shared)?;
        Ok(Self {
            left,
            right,
            sharing,
            shared_layers,
        })
    }

    pub fn sharing(&self) -> SharingSpec {
        self.sharing
    }

    pub fn shared_param_names(&self) -> Vec<String> {
        self.left
            .params()
            .iter()
            .filter(|p| self.shared_layers.contains(layer_of(&p.name)))
            .map(|p| p.name.clone())
            .collect()
    }

    pub fn forward(
        &self,
        x_left: &Tensor,
        x_right: &Tensor,
        mode: &mut Mode,
    ) -> Result<(Tensor, Tensor)> {
        let y_left = self.left.forward(x_left, mode)?;
        let y_right = self.right.forward(x_right, mode)?;
        Ok((y_left, y_right))
    }

    /// Largest absolute difference between the two copies of any shared parameter.
    pub fn shared_max_diff(&self) -> Result<f64> {
        let mut worst = 0f64;
        for name in self.shared_param_names() {
            let (a, b) = (
                self.left.params().get(&name),
                self.right.params().get(&name),
            );
            let (Some(a), Some(b)) = (a, b) else {
                return Err(Error::SharingViolated {
                    name,
                    max_diff: f64::INFINITY,
                });
            };
            let d = (a.as_tensor() - b.as_tensor())?
                .abs()?
                .max_all()?
                .to_dtype(DType::F64)?
                .to_scalar::<f64>()?;
            worst = worst.max(d);
        }
        Ok(worst)
    }

    /// Confirms both branches hold identical shared parameters. The branches
    /// alias one storage, so this is a check rather than a copy.
    pub fn sync_shared_blocks(&self) -> Result<()> {
        if !self.sharing.enabled() {
            return Err(Error::SharingDisabled);
        }
        for name in self.shared_param_names() {
            let a = self
                .left
                .params()
                .get(&name)
                .expect("listed from left store");
            let b = self
                .right
                .params()
                .get(&name)
                .ok_or_else(|| Error::SharingViolated {
                    name: name.clone(),
                    max_diff: f64::INFINITY,
                })?;
            if a.as_tensor().id() != b.as_tensor().id() {
                b.set(a.as_tensor())?;
            }
        }
        let max_diff = self.shared_max_diff()?;
        if max_diff != 0.0 {
            return Err(Error::SharingViolated {
                name: "<any>".into(),
                max_diff,
            });
        }
        Ok(())
    }
}
