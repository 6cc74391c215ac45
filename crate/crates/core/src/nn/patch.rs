//! PatchGAN discriminator and receptive-field arithmetic.

use candle_core::{DType, Tensor};
use serde::{Deserialize, Serialize};

use super::layers::{leaky_relu, Conv2d, Mode, Norm, NormKind};
use super::params::{ParamBuilder, ParamStore};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

const KERNEL: usize = 4;
const PADDING: usize = 1;

/// Receptive field and cumulative stride of one output unit of a conv stack,
/// via `rf += (k - 1) * jump; jump *= s`.
pub fn receptive_field(layers: &[(usize, usize)]) -> (usize, usize) {
    layers.iter().fold((1, 1), |(rf, jump), &(k, s)| {
        (rf + (k - 1) * jump, jump * s)
    })
}

/// Output side length after one `k x k` conv with stride `s` and padding `p`.
pub fn conv_out(size: usize, k: usize, s: usize, p: usize) -> Option<usize> {
    (size + 2 * p).checked_sub(k).map(|v| v / s + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PatchDiscConfig {
    /// Hidden conv widths; a final 1-channel conv is appended.
    pub layer_widths: Vec<usize>,
    /// How many leading layers use stride 2; the rest use stride 1.
    pub strided_layers: usize,
    /// Concatenate the side-pose condition with the candidate.
    pub conditional: bool,
    pub image_channels: usize,
    /// Constructor fails unless the ladder's receptive field equals this.
    pub target_rf: Option<usize>,
}

impl Default for PatchDiscConfig {
    fn default() -> Self {
        Self {
            layer_widths: vec![64, 128, 256, 512],
            strided_layers: 3,
            conditional: true,
            image_channels: 3,
            target_rf: Some(70),
        }
    }
}

impl PatchDiscConfig {
    /// Same ladder shape at `base` channels.
    pub fn scaled(base: usize) -> Self {
        Self {
            layer_widths: vec![base, base * 2, base * 4, base * 8],
            ..Self::default()
        }
    }

    /// The 286x286 receptive-field variant.
    pub fn rf286(base: usize) -> Self {
        Self {
            layer_widths: vec![base, base * 2, base * 4, base * 8, base * 8, base * 8],
            strided_layers: 5,
            target_rf: Some(286),
            ..Self::default()
        }
    }

    pub fn in_channels(&self) -> usize {
        if self.conditional {
            2 * self.image_channels
        } else {
            self.image_channels
        }
    }

    /// `(kernel, stride)` of every conv, including the final logit layer.
    pub fn ladder(&self) -> Vec<(usize, usize)> {
        (0..=self.layer_widths.len())
            .map(|i| (KERNEL, if i < self.strided_layers { 2 } else { 1 }))
            .collect()
    }

    pub fn receptive_field(&self) -> (usize, usize) {
        receptive_field(&self.ladder())
    }

    /// Logit-grid side for a square input of side `size`.
    pub fn grid_size(&self, size: usize) -> Option<usize> {
        self.ladder().iter().try_fold(size, |s, &(k, st)| {
            conv_out(s, k, st, PADDING).filter(|&o| o >= 1)
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.is_empty() || self.layer_widths.contains(&0) {
            return Err(Error::InvalidConfig(
                "discriminator needs positive layer widths".into(),
            ));
        }
        if self.strided_layers > self.layer_widths.len() + 1 {
            return Err(Error::InvalidConfig(
                "more strided layers than layers".into(),
            ));
        }
        if let Some(target) = self.target_rf {
            let (rf, _) = self.receptive_field();
            if rf != target {
                return Err(Error::InvalidConfig(format!(
                    "discriminator receptive field is {rf}, expected {target}"
                )));
            }
        }
        Ok(())
    }
}

/// N x N raw logits, one per receptive-field patch.
#[derive(Debug, Clone)]
pub struct PatchGrid {
    /// `N x 1 x G x G`, no sigmoid applied.
    pub logits: Tensor,
    pub rf_size: usize,
    pub rf_stride: usize,
}

impl PatchGrid {
    pub fn grid_dims(&self) -> (usize, usize) {
        let d = self.logits.dims();
        (d[d.len() - 2], d[d.len() - 1])
    }
}

#[derive(Debug, Clone)]
struct DiscLayer {
    conv: Conv2d,
    norm: Norm,
    activate: bool,
}

#[derive(Debug, Clone)]
pub struct PatchDiscriminator {
    config: PatchDiscConfig,
    layers: Vec<DiscLayer>,
    store: ParamStore,
}

impl PatchDiscriminator {
    pub fn new(config: PatchDiscConfig, rng: &mut SeededRng, dtype: DType) -> Result<Self> {
        config.validate()?;
        let mut pb = ParamBuilder::new(rng, dtype);
        let ladder = config.ladder();
        let mut layers = Vec::with_capacity(ladder.len());
        let mut c_in = config.in_channels();
        let last = ladder.len() - 1;
        for (i, &(k, s)) in ladder.iter().enumerate() {
            let c_out = if i == last { 1 } else { config.layer_widths[i] };
            let edge = i == 0 || i == last;
            let conv = Conv2d::new(
                &mut pb,
                &format!("layer.{}.conv", i + 1),
                c_in,
                c_out,
                k,
                s,
                PADDING,
                edge,
            )?;
            let norm = Norm::new(
                &mut pb,
                &format!("layer.{}.norm", i + 1),
                (!edge).then_some(NormKind::Instance),
                c_out,
            )?;
            layers.push(DiscLayer {
                conv,
                norm,
                activate: i != last,
            });
            c_in = c_out;
        }
        Ok(Self {
            config,
            layers,
            store: pb.finish(),
        })
    }

    pub fn config(&self) -> &PatchDiscConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn count_parameters(&self) -> usize {
        self.store.trainable_count()
    }

    /// Scores `candidate`, conditioned on `condition` when the config is
    /// conditional. Inputs are `N x C x H x W` or `C x H x W`.
    pub fn forward(
        &self,
        condition: Option<&Tensor>,
        candidate: &Tensor,
        mode: &mut Mode,
    ) -> Result<PatchGrid> {
        let batch = |t: &Tensor| -> Result<Tensor> {
            Ok(if t.rank() == 3 {
                t.unsqueeze(0)?
            } else {
                t.clone()
            })
        };
        let candidate = batch(candidate)?;
        let x = match (self.config.conditional, condition) {
            (true, Some(c)) => {
                let c = batch(c)?;
                if c.dims() != candidate.dims() {
                    return Err(Error::shape(format!(
                        "condition {:?} vs candidate {:?}",
                        c.dims(),
                        candidate.dims()
                    )));
                }
                Tensor::cat(&[&c, &candidate], 1)?
            }
            (true, None) => {
                return Err(Error::shape(
                    "conditional discriminator needs a condition image",
                ))
            }
            (false, _) => candidate,
        };
        let dims = x.dims4()?;
        if dims.1 != self.config.in_channels() {
            return Err(Error::shape(format!(
                "expected {} channels, got {}",
                self.config.in_channels(),
                dims.1
            )));
        }
        if self.config.grid_size(dims.2.min(dims.3)).is_none() {
            return Err(Error::shape(format!(
                "input {}x{} too small for the discriminator",
                dims.2, dims.3
            )));
        }
        let train = mode.is_train();
        let mut h = x;
        for layer in &self.layers {
            h = layer.norm.forward(&layer.conv.forward(&h)?, train)?;
            if layer.activate {
                h = leaky_relu(&h)?;
            }
        }
        let (rf_size, rf_stride) = self.config.receptive_field();
        Ok(PatchGrid {
            logits: h,
            rf_size,
            rf_stride,
        })
    }
}
