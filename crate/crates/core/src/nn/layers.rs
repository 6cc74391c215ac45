//! Convolution, normalization and activation building blocks.

use candle_core::{DType, Device, Tensor, Var, D};
use serde::{Deserialize, Serialize};

use super::params::{Init, ParamBuilder};
use crate::error::Result;
use crate::rng::SeededRng;

pub const INIT_STD: f64 = 0.02;
pub const LEAKY_SLOPE: f64 = 0.2;
const NORM_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

/// Forward-pass mode. Training mode owns the RNG used for dropout masks.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut SeededRng),
}

impl Mode<'_> {
    pub fn is_train(&self) -> bool {
        matches!(self, Mode::Train(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    Batch,
    #[default]
    Instance,
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Var,
    pub bias: Option<Var>,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2d {
    pub fn new(
        pb: &mut ParamBuilder,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        padding: usize,
        bias: bool,
    ) -> Result<Self> {
        let weight = pb.param(
            &format!("{name}.weight"),
            &[c_out, c_in, k, k],
            Init::Normal(INIT_STD),
        )?;
        let bias = if bias {
            Some(pb.param(&format!("{name}.bias"), &[c_out], Init::Constant(0.0))?)
        } else {
            None
        };
        Ok(Self {
            weight,
            bias,
            stride,
            padding,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv2d(&self.weight, self.padding, self.stride, 1, 1)?;
        add_channel_bias(y, self.bias.as_ref())
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dims()[0]
    }
}

/// Transposed convolution; the weight is laid out `[c_in, c_out, k, k]`.
#[derive(Debug, Clone)]
pub struct ConvTranspose2d {
    pub weight: Var,
    pub bias: Option<Var>,
    pub stride: usize,
    pub padding: usize,
}

impl ConvTranspose2d {
    pub fn new(
        pb: &mut ParamBuilder,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        padding: usize,
        bias: bool,
    ) -> Result<Self> {
        let weight = pb.param(
            &format!("{name}.weight"),
            &[c_in, c_out, k, k],
            Init::Normal(INIT_STD),
        )?;
        let bias = if bias {
            Some(pb.param(&format!("{name}.bias"), &[c_out], Init::Constant(0.0))?)
        } else {
            None
        };
        Ok(Self {
            weight,
            bias,
            stride,
            padding,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv_transpose2d(&self.weight, self.padding, 0, self.stride, 1)?;
        add_channel_bias(y, self.bias.as_ref())
    }
}

fn add_channel_bias(y: Tensor, bias: Option<&Var>) -> Result<Tensor> {
    match bias {
        Some(b) => Ok(y.broadcast_add(&b.as_tensor().reshape((1, b.dims()[0], 1, 1))?)?),
        None => Ok(y),
    }
}

#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: Var,
    pub beta: Var,
    pub running_mean: Var,
    pub running_var: Var,
}

#[derive(Debug, Clone)]
pub enum Norm {
    None,
    /// Per-sample, per-channel statistics; no affine parameters.
    Instance,
    Batch(BatchNorm),
}

impl Norm {
    pub fn new(
        pb: &mut ParamBuilder,
        name: &str,
        kind: Option<NormKind>,
        channels: usize,
    ) -> Result<Self> {
        Ok(match kind {
            None => Norm::None,
            Some(NormKind::Instance) => Norm::Instance,
            Some(NormKind::Batch) => Norm::Batch(BatchNorm {
                gamma: pb.param(
                    &format!("{name}.gamma"),
                    &[channels],
                    Init::NormalAround {
                        mean: 1.0,
                        std: INIT_STD,
                    },
                )?,
                beta: pb.param(&format!("{name}.beta"), &[channels], Init::Constant(0.0))?,
                running_mean: pb.buffer(&format!("{name}.running_mean"), &[channels], 0.0)?,
                running_var: pb.buffer(&format!("{name}.running_var"), &[channels], 1.0)?,
            }),
        })
    }

    pub fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        match self {
            Norm::None => Ok(x.clone()),
            Norm::Instance => {
                let (n, c, h, w) = x.dims4()?;
                let flat = x.reshape((n, c, h * w))?;
                let mean = flat.mean_keepdim(D::Minus1)?;
                let centered = flat.broadcast_sub(&mean)?;
                let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
                let y = centered.broadcast_div(&(var + NORM_EPS)?.sqrt()?)?;
                Ok(y.reshape((n, c, h, w))?)
            }
            Norm::Batch(bn) => {
                let (n, c, h, w) = x.dims4()?;
                let (mean, var) = if train {
                    let per_channel = x.transpose(0, 1)?.reshape((c, n * h * w))?;
                    let mean = per_channel.mean_keepdim(1)?;
                    let var = per_channel.broadcast_sub(&mean)?.sqr()?.mean_keepdim(1)?;
                    let count = (n * h * w) as f64;
                    let unbiased = if count > 1.0 {
                        (var.detach() * (count / (count - 1.0)))?
                    } else {
                        var.detach()
                    };
                    let rm = ((bn.running_mean.as_tensor() * (1.0 - BN_MOMENTUM))?
                        + (mean.detach().flatten_all()? * BN_MOMENTUM)?)?;
                    let rv = ((bn.running_var.as_tensor() * (1.0 - BN_MOMENTUM))?
                        + (unbiased.flatten_all()? * BN_MOMENTUM)?)?;
                    bn.running_mean.set(&rm)?;
                    bn.running_var.set(&rv)?;
                    (mean.reshape((1, c, 1, 1))?, var.reshape((1, c, 1, 1))?)
                } else {
                    (
                        bn.running_mean.as_tensor().reshape((1, c, 1, 1))?,
                        bn.running_var.as_tensor().reshape((1, c, 1, 1))?,
                    )
                };
                let y = x
                    .broadcast_sub(&mean)?
                    .broadcast_div(&(var + NORM_EPS)?.sqrt()?)?;
                let y = y.broadcast_mul(&bn.gamma.as_tensor().reshape((1, c, 1, 1))?)?;
                Ok(y.broadcast_add(&bn.beta.as_tensor().reshape((1, c, 1, 1))?)?)
            }
        }
    }
}

pub fn leaky_relu(x: &Tensor) -> Result<Tensor> {
    Ok(x.maximum(&(x * LEAKY_SLOPE)?)?)
}

/// Inverted dropout; identity outside training.
pub fn dropout(x: &Tensor, rate: f64, mode: &mut Mode) -> Result<Tensor> {
    match mode {
        Mode::Train(rng) if rate > 0.0 => {
            let mask = rng.dropout_mask(x.elem_count(), rate);
            let mask = Tensor::from_vec(mask, x.dims(), &Device::Cpu)?.to_dtype(x.dtype())?;
            Ok((x * mask)?)
        }
        _ => Ok(x.clone()),
    }
}

pub fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}
