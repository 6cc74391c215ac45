//! Adam with serializable moment state.

use std::collections::HashSet;

use candle_core::backprop::GradStore;
use candle_core::{Tensor, Var};

use super::checkpoint::Checkpoint;
use super::params::ParamStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

struct Slot {
    name: String,
    var: Var,
    m: Tensor,
    v: Tensor,
}

pub struct Adam {
    config: AdamConfig,
    step: u64,
    slots: Vec<Slot>,
}

impl Adam {
    /// Optimizes the trainable parameters of every store; aliased parameters
    /// (shared between stores) are registered once under their first name.
    pub fn new(config: AdamConfig, stores: &[(&str, &ParamStore)]) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut slots = Vec::new();
        for (prefix, store) in stores {
            for p in store.trainable() {
                if !seen.insert(p.var.as_tensor().id()) {
                    continue;
                }
                let zeros = p.var.as_tensor().zeros_like()?;
                slots.push(Slot {
                    name: format!("{prefix}{}", p.name),
                    var: p.var.clone(),
                    m: zeros.clone(),
                    v: zeros,
                });
            }
        }
        Ok(Self {
            config,
            step: 0,
            slots,
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn vars(&self) -> impl Iterator<Item = (&str, &Var)> {
        self.slots.iter().map(|s| (s.name.as_str(), &s.var))
    }

    /// One update from `grads`; parameters without a gradient are left alone.
    pub fn step(&mut self, grads: &GradStore) -> Result<()> {
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for slot in &mut self.slots {
            let Some(g) = grads.get(slot.var.as_tensor()) else {
                continue;
            };
            let g = g.detach().to_dtype(slot.var.dtype())?;
            slot.m = ((&slot.m * beta1)? + (&g * (1.0 - beta1))?)?;
            slot.v = ((&slot.v * beta2)? + (g.sqr()? * (1.0 - beta2))?)?;
            let m_hat = (&slot.m / bc1)?;
            let v_hat = (&slot.v / bc2)?;
            let update = (m_hat / (v_hat.sqrt()? + eps)?)?;
            let next = (slot.var.as_tensor() - (update * lr)?)?;
            slot.var.set(&next)?;
        }
        Ok(())
    }

    pub fn save_into(&self, prefix: &str, ck: &mut Checkpoint) -> Result<()> {
        for s in &self.slots {
            ck.push(&format!("{prefix}m.{}", s.name), &s.m)?;
            ck.push(&format!("{prefix}v.{}", s.name), &s.v)?;
        }
        Ok(())
    }

    pub fn load_from(&mut self, prefix: &str, ck: &Checkpoint, step: u64) -> Result<()> {
        for s in &mut self.slots {
            let fetch = |kind: &str| -> Result<Tensor> {
                let key = format!("{prefix}{kind}.{}", s.name);
                let t = ck
                    .get(&key)
                    .ok_or_else(|| Error::Checkpoint(format!("optimizer state lacks `{key}`")))?;
                let t = t.to_tensor()?.to_dtype(s.var.dtype())?;
                if t.dims() != s.var.dims() {
                    return Err(Error::Checkpoint(format!(
                        "optimizer state `{key}` has the wrong shape"
                    )));
                }
                Ok(t)
            };
            s.m = fetch("m")?;
            s.v = fetch("v")?;
        }
        self.step = step;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::{Init, ParamBuilder};
    use crate::rng::SeededRng;
    use candle_core::DType;

    #[test]
    fn minimizes_a_quadratic() {
        let mut rng = SeededRng::new(0);
        let mut pb = ParamBuilder::new(&mut rng, DType::F64);
        let w = pb.param("w", &[2], Init::Constant(3.0)).unwrap();
        let store = pb.finish();
        let mut opt = Adam::new(
            AdamConfig {
                lr: 0.1,
                beta1: 0.9,
                ..Default::default()
            },
            &[("", &store)],
        )
        .unwrap();
        for _ in 0..300 {
            let loss = w.as_tensor().sqr().unwrap().sum_all().unwrap();
            opt.step(&loss.backward().unwrap()).unwrap();
        }
        let v = w.as_tensor().to_vec1::<f64>().unwrap();
        assert!(v.iter().all(|x| x.abs() < 0.05), "{v:?}");
    }

    #[test]
    fn moments_carry_no_autograd_history() {
        let mut rng = SeededRng::new(0);
        let mut pb = ParamBuilder::new(&mut rng, DType::F64);
        let w = pb.param("w", &[3], Init::Constant(1.0)).unwrap();
        let store = pb.finish();
        let mut opt = Adam::new(AdamConfig::default(), &[("", &store)]).unwrap();
        let loss = w
            .as_tensor()
            .sqr()
            .unwrap()
            .exp()
            .unwrap()
            .sum_all()
            .unwrap();
        opt.step(&loss.backward().unwrap()).unwrap();
        // Tracked moments would keep every step's graph alive.
        assert!(opt.slots.iter().all(|s| !s.m.track_op() && !s.v.track_op()));
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut rng = SeededRng::new(0);
        let mut pb = ParamBuilder::new(&mut rng, DType::F64);
        let w = pb.param("w", &[1], Init::Constant(1.0)).unwrap();
        let store = pb.finish();
        let mut opt = Adam::new(AdamConfig::default(), &[("", &store)]).unwrap();
        let loss = (w.as_tensor() * 5.0).unwrap().sum_all().unwrap();
        opt.step(&loss.backward().unwrap()).unwrap();
        let v = w.as_tensor().to_vec1::<f64>().unwrap()[0];
        assert!((v - (1.0 - 2e-4)).abs() < 1e-9);
    }
}
