//! Generator and discriminator objectives.
//!
//! Every loss takes `C x H x W` or `N x C x H x W` tensors and returns a
//! differentiable scalar tensor. Pixel losses average over channels and
//! batch, so weights stay comparable between gray and color inputs.

pub mod presets;

use std::fmt;

use candle_core::{Tensor, D};
use serde::{Deserialize, Serialize};

pub use presets::{named_preset, Preset, WeightSchedule, PRESET_NAMES};

use crate::error::{Error, Result};
use crate::nn::layers::{scalar, Mode};
use crate::nn::{PatchGrid, UNetGenerator};

/// `|x|` whose gradient at zero is zero.
fn abs0(x: &Tensor) -> Result<Tensor> {
    Ok((x * x.sign()?.detach())?)
}

/// `log(1 + exp(x))`, stable for large `|x|`.
fn softplus(x: &Tensor) -> Result<Tensor> {
    let tail = (x.abs()?.neg()?.exp()? + 1.0)?.log()?;
    Ok((x.relu()? + tail)?)
}

fn as_batch(t: &Tensor) -> Result<Tensor> {
    match t.rank() {
        3 => Ok(t.unsqueeze(0)?),
        4 => Ok(t.clone()),
        r => Err(Error::shape(format!(
            "expected a rank-3 or rank-4 image tensor, got rank {r}"
        ))),
    }
}

fn same_shape(a: &Tensor, b: &Tensor) -> Result<(Tensor, Tensor)> {
    let (a, b) = (as_batch(a)?, as_batch(b)?);
    if a.dims() != b.dims() {
        return Err(Error::shape(format!("{:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok((a, b))
}

/// Non-saturating generator loss: mean over patches of `-log sigmoid(logit)`.
pub fn adversarial_g_loss(fake: &PatchGrid) -> Result<Tensor> {
    Ok(softplus(&fake.logits.neg()?)?.mean_all()?)
}

/// Mean over patches of `[-log sigmoid(real) - log(1 - sigmoid(fake))] / 2`.
pub fn adversarial_d_loss(real: &PatchGrid, fake: &PatchGrid) -> Result<Tensor> {
    if real.logits.dims() != fake.logits.dims() {
        return Err(Error::shape(format!(
            "real grid {:?} vs fake grid {:?}",
            real.logits.dims(),
            fake.logits.dims()
        )));
    }
    let per_patch = (softplus(&real.logits.neg()?)? + softplus(&fake.logits)?)?;
    Ok((per_patch.mean_all()? * 0.5)?)
}

/// Mean absolute error between ground truth and output.
pub fn l1_loss(gt: &Tensor, y: &Tensor) -> Result<Tensor> {
    let (gt, y) = same_shape(gt, y)?;
    Ok(abs0(&(gt - y)?)?.mean_all()?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GdlConfig {
    /// Exponent on the gradient mismatch, at least 1.
    pub alpha: u32,
    /// Divide by the number of neighbor pairs. When false the sum is only
    /// averaged over channels and batch, which scales with image area.
    pub normalize: bool,
}

impl Default for GdlConfig {
    fn default() -> Self {
        Self {
            alpha: 1,
            normalize: true,
        }
    }
}

fn int_pow(x: Tensor, alpha: u32) -> Result<Tensor> {
    let mut out = x.clone();
    for _ in 1..alpha {
        out = (out * &x)?;
    }
    Ok(out)
}

/// Gradient difference loss over horizontal and vertical neighbor pairs.
pub fn gdl_loss(gt: &Tensor, y: &Tensor, cfg: GdlConfig) -> Result<Tensor> {
    if cfg.alpha == 0 {
        return Err(Error::InvalidConfig("GDL alpha must be at least 1".into()));
    }
    let (gt, y) = same_shape(gt, y)?;
    let (n, c, h, w) = y.dims4()?;
    if h < 2 || w < 2 {
        return Err(Error::shape(format!(
            "GDL needs at least 2x2 images, got {h}x{w}"
        )));
    }
    let diff = |t: &Tensor, dim: usize, len: usize| -> Result<Tensor> {
        Ok((t.narrow(dim, 1, len - 1)? - t.narrow(dim, 0, len - 1)?)?)
    };
    let mismatch = |dim: usize, len: usize| -> Result<Tensor> {
        let dy = abs0(&diff(&y, dim, len)?)?;
        let dgt = abs0(&diff(&gt, dim, len)?)?;
        int_pow(abs0(&(dy - dgt)?)?, cfg.alpha)
    };
    let total = (mismatch(3, w)?.sum_all()? + mismatch(2, h)?.sum_all()?)?;
    let per_image = (n * c) as f64;
    let denom = if cfg.normalize {
        per_image * ((w - 1) * h + w * (h - 1)) as f64
    } else {
        per_image
    };
    Ok((total / denom)?)
}

/// Mean absolute difference between each left-half pixel and its mirror.
pub fn symmetry_loss(y: &Tensor) -> Result<Tensor> {
    let y = as_batch(y)?;
    let w = y.dim(D::Minus1)?;
    if w % 2 != 0 {
        return Err(Error::shape(format!(
            "symmetry loss needs an even width, got {w}"
        )));
    }
    let half = w / 2;
    let left = y.narrow(3, 0, half)?;
    let mirrored = y.flip(&[3])?.narrow(3, 0, half)?;
    Ok(abs0(&(left - mirrored)?)?.mean_all()?)
}

/// L1 between two generator outputs.
pub fn pair_loss(y_left: &Tensor, y_right: &Tensor) -> Result<Tensor> {
    l1_loss(y_left, y_right)
}

/// Something mapping an image batch to an image batch.
pub trait ImageToImage {
    fn translate(&self, x: &Tensor, mode: &mut Mode) -> Result<Tensor>;
}

impl ImageToImage for UNetGenerator {
    fn translate(&self, x: &Tensor, mode: &mut Mode) -> Result<Tensor> {
        self.forward(x, mode)
    }
}

/// Wraps a closure as an [`ImageToImage`].
pub struct FnGenerator<F>(pub F);

impl<F: Fn(&Tensor) -> Result<Tensor>> ImageToImage for FnGenerator<F> {
    fn translate(&self, x: &Tensor, _mode: &mut Mode) -> Result<Tensor> {
        (self.0)(x)
    }
}

/// `l1_loss(gt, g(gt))`, with gradients flowing through `g`.
pub fn identity_loss(gt: &Tensor, g: &dyn ImageToImage, mode: &mut Mode) -> Result<Tensor> {
    let ground_identity = g.translate(gt, mode)?;
    l1_loss(gt, &ground_identity)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub adv: f64,
    pub l1: f64,
    pub gdl: f64,
    pub sym: f64,
    pub id: f64,
    pub pair: f64,
}

impl LossWeights {
    pub const fn new(adv: f64, l1: f64, gdl: f64, sym: f64, id: f64, pair: f64) -> Self {
        Self {
            adv,
            l1,
            gdl,
            sym,
            id,
            pair,
        }
    }

    pub fn get(&self, term: LossTerm) -> f64 {
        match term {
            LossTerm::Adv => self.adv,
            LossTerm::L1 => self.l1,
            LossTerm::Gdl => self.gdl,
            LossTerm::Sym => self.sym,
            LossTerm::Id => self.id,
            LossTerm::Pair => self.pair,
        }
    }

    pub fn set(&mut self, term: LossTerm, value: f64) {
        match term {
            LossTerm::Adv => self.adv = value,
            LossTerm::L1 => self.l1 = value,
            LossTerm::Gdl => self.gdl = value,
            LossTerm::Sym => self.sym = value,
            LossTerm::Id => self.id = value,
            LossTerm::Pair => self.pair = value,
        }
    }

    pub fn as_array(&self) -> [f64; 6] {
        LossTerm::ALL.map(|t| self.get(t))
    }

    pub fn validate(&self) -> Result<()> {
        let values = self.as_array();
        if values.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidConfig(format!(
                "loss weights must be finite and non-negative: {values:?}"
            )));
        }
        if values.iter().all(|w| *w == 0.0) {
            return Err(Error::InvalidConfig(
                "at least one loss weight must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossTerm {
    Adv,
    L1,
    Gdl,
    Sym,
    Id,
    Pair,
}

impl LossTerm {
    pub const ALL: [LossTerm; 6] = [
        LossTerm::Adv,
        LossTerm::L1,
        LossTerm::Gdl,
        LossTerm::Sym,
        LossTerm::Id,
        LossTerm::Pair,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossTerm::Adv => "adv",
            LossTerm::L1 => "l1",
            LossTerm::Gdl => "gdl",
            LossTerm::Sym => "sym",
            LossTerm::Id => "id",
            LossTerm::Pair => "pair",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == name)
    }
}

impl fmt::Display for LossTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermValue {
    pub term: LossTerm,
    pub raw: f64,
    pub weighted: f64,
}

/// Raw and weighted value of every computed term, plus their sum.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub terms: Vec<TermValue>,
    pub total: f64,
}

impl LossBreakdown {
    pub fn get(&self, term: LossTerm) -> Option<&TermValue> {
        self.terms.iter().find(|t| t.term == term)
    }

    pub fn computed_terms(&self) -> Vec<LossTerm> {
        self.terms.iter().map(|t| t.term).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    Pix2pix,
    #[default]
    Pairwise,
}

/// Tensors produced by one generator branch.
#[derive(Debug, Clone, Copy, Default)]
pub struct BranchInputs<'a> {
    /// Discriminator output on this branch's fake sample.
    pub fake_logits: Option<&'a PatchGrid>,
    /// Generated frontal image.
    pub output: Option<&'a Tensor>,
    pub ground_truth: Option<&'a Tensor>,
    /// The generator applied to the ground truth.
    pub ground_identity: Option<&'a Tensor>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GeneratorLossInputs<'a> {
    pub left: BranchInputs<'a>,
    /// Second branch; pairwise mode only.
    pub right: Option<BranchInputs<'a>>,
}

pub struct CompositeLoss {
    /// Differentiable weighted total.
    pub total: Tensor,
    pub breakdown: LossBreakdown,
}

fn branch_term(term: LossTerm, b: &BranchInputs, gdl: GdlConfig) -> Result<Tensor> {
    let need = |v: Option<&Tensor>| v.ok_or(Error::MissingInput(term.name())).cloned();
    match term {
        LossTerm::Adv => adversarial_g_loss(b.fake_logits.ok_or(Error::MissingInput("adv"))?),
        LossTerm::L1 => l1_loss(&need(b.ground_truth)?, &need(b.output)?),
        LossTerm::Gdl => gdl_loss(&need(b.ground_truth)?, &need(b.output)?, gdl),
        LossTerm::Sym => symmetry_loss(&need(b.output)?),
        LossTerm::Id => l1_loss(&need(b.ground_truth)?, &need(b.ground_identity)?),
        LossTerm::Pair => unreachable!("pair loss spans both branches"),
    }
}

/// Weighted sum of every positive-weight term. In pairwise mode each
/// per-branch term is summed over the two branches, so each generator sees
/// the preset weight on its own branch; the pair term couples them.
pub fn composite_generator_loss(
    inputs: &GeneratorLossInputs,
    weights: &LossWeights,
    gdl: GdlConfig,
    mode: TrainMode,
) -> Result<CompositeLoss> {
    weights.validate()?;
    let branches: Vec<&BranchInputs> = match mode {
        TrainMode::Pix2pix => vec![&inputs.left],
        TrainMode::Pairwise => {
            let right = inputs
                .right
                .as_ref()
                .ok_or(Error::MissingInput("right branch"))?;
            vec![&inputs.left, right]
        }
    };
    let mut total: Option<Tensor> = None;
    let mut breakdown = LossBreakdown::default();
    for term in LossTerm::ALL {
        let w = weights.get(term);
        if w == 0.0 {
            continue;
        }
        let raw = if term == LossTerm::Pair {
            let right = inputs.right.as_ref().ok_or(Error::MissingInput("pair"))?;
            let yl = inputs.left.output.ok_or(Error::MissingInput("pair"))?;
            let yr = right.output.ok_or(Error::MissingInput("pair"))?;
            pair_loss(yl, yr)?
        } else {
            let mut acc: Option<Tensor> = None;
            for b in &branches {
                let t = branch_term(term, b, gdl)?;
                acc = Some(match acc {
                    Some(a) => (a + t)?,
                    None => t,
                });
            }
            acc.expect("at least one branch")
        };
        let raw_value = scalar(&raw)?;
        let weighted = (raw * w)?;
        breakdown.terms.push(TermValue {
            term,
            raw: raw_value,
            weighted: w * raw_value,
        });
        total = Some(match total {
            Some(t) => (t + weighted)?,
            None => weighted,
        });
    }
    breakdown.total = breakdown.terms.iter().map(|t| t.weighted).sum();
    Ok(CompositeLoss {
        total: total.expect("validated weights have a positive entry"),
        breakdown,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};

    fn t(data: Vec<f64>, shape: &[usize]) -> Tensor {
        Tensor::from_vec(data, shape, &Device::Cpu).unwrap()
    }

    fn grid(values: Vec<f64>) -> PatchGrid {
        let n = values.len();
        PatchGrid {
            logits: t(values, &[1, 1, 1, n]),
            rf_size: 70,
            rf_stride: 8,
        }
    }

    fn s(x: Tensor) -> f64 {
        scalar(&x).unwrap()
    }

    #[test]
    fn adversarial_anchors() {
        let zeros = grid(vec![0.0; 9]);
        assert!((s(adversarial_g_loss(&zeros).unwrap()) - 2f64.ln()).abs() < 1e-12);
        assert!((s(adversarial_d_loss(&zeros, &zeros).unwrap()) - 2f64.ln()).abs() < 1e-12);
        assert!(s(adversarial_g_loss(&grid(vec![1e4; 4])).unwrap()) < 1e-12);
        let perfect = s(adversarial_d_loss(&grid(vec![1e4; 4]), &grid(vec![-1e4; 4])).unwrap());
        assert!(perfect.abs() < 1e-12);
    }

    #[test]
    fn adversarial_mixed_logits_match_per_patch_average() {
        let g = s(adversarial_g_loss(&grid(vec![0.0, 0.0, 50.0, -50.0])).unwrap());
        let expected =
            (2.0 * 2f64.ln() + (1.0 + (-50f64).exp()).ln() + 50.0 + (1.0 + (-50f64).exp()).ln())
                / 4.0;
        assert!((g - expected).abs() < 1e-9);
    }

    #[test]
    fn l1_constant_difference() {
        let gt = t(vec![1.0; 12], &[3, 2, 2]);
        let y = t(vec![0.0; 12], &[3, 2, 2]);
        assert_eq!(s(l1_loss(&gt, &y).unwrap()), 1.0);
        assert_eq!(s(l1_loss(&gt, &gt).unwrap()), 0.0);
        assert!(matches!(
            l1_loss(&gt, &t(vec![0.0; 8], &[2, 2, 2])),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn gdl_is_shift_invariant() {
        let gt = t(
            (0..27).map(|v| (v as f64 * 0.37).sin()).collect(),
            &[3, 3, 3],
        );
        let y = t(
            (0..27).map(|v| (v as f64 * 0.11).cos()).collect(),
            &[3, 3, 3],
        );
        let base = s(gdl_loss(&gt, &y, GdlConfig::default()).unwrap());
        let shifted = s(gdl_loss(&gt, &(&y + 0.5).unwrap(), GdlConfig::default()).unwrap());
        assert!((base - shifted).abs() < 1e-12);
        // dyadic values keep the shifted differences exact
        let dy = t((0..27).map(|v| (v % 7) as f64 / 8.0).collect(), &[3, 3, 3]);
        assert_eq!(
            s(gdl_loss(&dy, &(&dy + 0.25).unwrap(), GdlConfig::default()).unwrap()),
            0.0
        );
        assert!(gdl_loss(
            &gt,
            &y,
            GdlConfig {
                alpha: 0,
                normalize: true
            }
        )
        .is_err());
    }

    #[test]
    fn symmetry_anchors() {
        // Left half 1, right half -1.
        let v: Vec<f64> = (0..16)
            .map(|i| if i % 4 < 2 { 1.0 } else { -1.0 })
            .collect();
        assert_eq!(s(symmetry_loss(&t(v, &[1, 4, 4])).unwrap()), 2.0);
        let mirror: Vec<f64> = (0..16).map(|i| [0.1, 0.7, 0.7, 0.1][i % 4]).collect();
        assert_eq!(s(symmetry_loss(&t(mirror, &[1, 4, 4])).unwrap()), 0.0);
        assert!(symmetry_loss(&t(vec![0.0; 15], &[1, 5, 3])).is_err());
    }

    #[test]
    fn identity_loss_zero_and_constant_cases() {
        let gt = t(vec![1.0; 12], &[1, 3, 2, 2]);
        let ident = FnGenerator(|x: &Tensor| Ok(x.clone()));
        assert_eq!(s(identity_loss(&gt, &ident, &mut Mode::Eval).unwrap()), 0.0);
        let zero = FnGenerator(|x: &Tensor| Ok(x.zeros_like()?));
        assert_eq!(s(identity_loss(&gt, &zero, &mut Mode::Eval).unwrap()), 1.0);
    }

    #[test]
    fn pair_loss_is_symmetric() {
        let a = t((0..12).map(|v| v as f64 / 7.0).collect(), &[3, 2, 2]);
        let b = t(
            (0..12).map(|v| (v as f64).sqrt() / 4.0).collect(),
            &[3, 2, 2],
        );
        assert_eq!(s(pair_loss(&a, &b).unwrap()), s(pair_loss(&b, &a).unwrap()));
        assert_eq!(s(pair_loss(&a, &a).unwrap()), 0.0);
    }

    #[test]
    fn composite_skips_zero_weight_terms() {
        let y = t(vec![0.5; 12], &[1, 3, 2, 2]);
        let zeros = grid(vec![0.0; 4]);
        let inputs = GeneratorLossInputs {
            left: BranchInputs {
                fake_logits: Some(&zeros),
                output: Some(&y),
                ground_truth: Some(&y),
                ground_identity: Some(&y),
            },
            right: None,
        };
        let adv_only = composite_generator_loss(
            &inputs,
            &LossWeights::new(1., 0., 0., 0., 0., 0.),
            GdlConfig::default(),
            TrainMode::Pix2pix,
        )
        .unwrap();
        assert!((adv_only.breakdown.total - 2f64.ln()).abs() < 1e-12);
        let l1_only = composite_generator_loss(
            &inputs,
            &LossWeights::new(0., 1., 0., 0., 0., 0.),
            GdlConfig::default(),
            TrainMode::Pix2pix,
        )
        .unwrap();
        assert_eq!(l1_only.breakdown.total, 0.0);
        let best = named_preset("pix2pix-best").unwrap().schedule.start;
        let b = composite_generator_loss(&inputs, &best, GdlConfig::default(), TrainMode::Pix2pix)
            .unwrap();
        assert_eq!(
            b.breakdown.computed_terms(),
            [LossTerm::Adv, LossTerm::L1, LossTerm::Gdl, LossTerm::Id]
        );
    }

    #[test]
    fn composite_reports_missing_inputs() {
        let y = t(vec![0.5; 12], &[1, 3, 2, 2]);
        let inputs = GeneratorLossInputs {
            left: BranchInputs {
                output: Some(&y),
                ..Default::default()
            },
            right: None,
        };
        let r = composite_generator_loss(
            &inputs,
            &LossWeights::new(0., 1., 0., 0., 0., 0.),
            GdlConfig::default(),
            TrainMode::Pix2pix,
        );
        assert!(matches!(r, Err(Error::MissingInput("l1"))));
        let r = composite_generator_loss(
            &inputs,
            &LossWeights::new(0., 0., 0., 1., 0., 0.),
            GdlConfig::default(),
            TrainMode::Pairwise,
        );
        assert!(matches!(r, Err(Error::MissingInput(_))));
    }

    #[test]
    fn abs_subgradient_at_zero_is_zero() {
        let x = candle_core::Var::from_tensor(&t(vec![0.0, 2.0, -3.0], &[3])).unwrap();
        let g = abs0(x.as_tensor())
            .unwrap()
            .sum_all()
            .unwrap()
            .backward()
            .unwrap();
        let grad = g
            .get(x.as_tensor())
            .unwrap()
            .to_dtype(DType::F64)
            .unwrap()
            .to_vec1::<f64>()
            .unwrap();
        assert_eq!(grad, [0.0, 1.0, -1.0]);
    }
}
