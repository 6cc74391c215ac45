//! Alternating discriminator/generator optimization with checkpointing and
//! resumable state.
//!
//! Every step updates the discriminator once on detached fakes, then the
//! generator(s) once on the composite loss. Randomness comes from three
//! streams derived from the config seed: parameter init, dropout (carried
//! in the checkpointed state), and a per-epoch data order.

pub mod config;
pub mod source;

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use candle_core::{DType, Tensor};
use serde::{Deserialize, Serialize};
use serde_json::json;

pub use config::{DeviceKind, ResolvedLoss, TrainConfig, PAPER_PRESETS};
pub use source::{DiskImages, ImageSource, MemoryImages, PairBatch, TripletBatch};

use crate::data::DatasetManifest;
use crate::error::{Error, Result};
use crate::losses::{
    adversarial_d_loss, composite_generator_loss, BranchInputs, GeneratorLossInputs, LossBreakdown,
    LossTerm, LossWeights, TrainMode,
};
use crate::nn::layers::{scalar, Mode};
use crate::nn::{
    Adam, Checkpoint, PairwiseGenerator, ParamStore, PatchDiscriminator, PatchGrid, UNetGenerator,
};
use crate::rng::{RngState, SeededRng};
use crate::util::DirLock;

pub const STATE_TAG: &str = "train-state";
pub const LOSS_LOG: &str = "loss_log.jsonl";
pub const EPOCH_LOG: &str = "epoch_log.jsonl";
pub const CKPT_DIR: &str = "ckpt";
const EMA_DECAY: f64 = 0.98;

pub fn epoch_dir_name(epoch: usize) -> String {
    format!("epoch_{epoch:03}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    /// Completed epochs.
    pub epoch: usize,
    /// Completed optimizer steps.
    pub step: usize,
    /// Exponential moving average of each logged term.
    pub ema: BTreeMap<String, f64>,
    pub rng: RngState,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepReport {
    /// 1-based epoch the step belongs to.
    pub epoch: usize,
    /// 0-based global step index.
    pub step: usize,
    pub d_loss: f64,
    pub g: LossBreakdown,
}

/// One line of `loss_log.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub step: usize,
    pub term: String,
    pub raw: f64,
    pub weighted: f64,
}

impl StepReport {
    pub fn records(&self) -> Vec<LossRecord> {
        let mut out = vec![LossRecord {
            epoch: self.epoch,
            step: self.step,
            term: "d".into(),
            raw: self.d_loss,
            weighted: self.d_loss,
        }];
        out.extend(self.g.terms.iter().map(|t| LossRecord {
            epoch: self.epoch,
            step: self.step,
            term: t.term.name().into(),
            raw: t.raw,
            weighted: t.weighted,
        }));
        out
    }
}

#[derive(Debug, Clone)]
pub enum Generators {
    Single(UNetGenerator),
    Pair(PairwiseGenerator),
}

impl Generators {
    /// G for pix2pix, G1 for pairwise.
    pub fn left(&self) -> &UNetGenerator {
        match self {
            Generators::Single(g) => g,
            Generators::Pair(p) => &p.left,
        }
    }

    pub fn right(&self) -> Option<&UNetGenerator> {
        match self {
            Generators::Single(_) => None,
            Generators::Pair(p) => Some(&p.right),
        }
    }

    fn stores(&self) -> Vec<(&'static str, &ParamStore)> {
        let mut v = vec![("g1.", self.left().params())];
        if let Some(r) = self.right() {
            v.push(("g2.", r.params()));
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub epochs_completed: usize,
    pub steps: usize,
    pub last_checkpoint: Option<PathBuf>,
    pub ema: BTreeMap<String, f64>,
}

pub struct Trainer {
    config: TrainConfig,
    loss: ResolvedLoss,
    generators: Generators,
    discs: Vec<PatchDiscriminator>,
    opt_g: Adam,
    opt_d: Adam,
    rng: SeededRng,
    state: TrainState,
}

fn non_finite_params(stores: &[(&str, &ParamStore)]) -> Result<Vec<String>> {
    let mut bad = Vec::new();
    for (prefix, store) in stores {
        for p in store.iter() {
            let s = p
                .var
                .as_tensor()
                .sum_all()?
                .to_dtype(DType::F64)?
                .to_scalar::<f64>()?;
            if !s.is_finite() {
                bad.push(format!("{prefix}{}", p.name));
            }
        }
    }
    Ok(bad)
}

fn guard(
    value: f64,
    what: &str,
    epoch: usize,
    step: usize,
    context: impl FnOnce() -> Result<String>,
) -> Result<()> {
    if value.is_finite() {
        return Ok(());
    }
    let detail = format!("{what} = {value}; {}", context()?);
    log::error!("non-finite loss at epoch {epoch} step {step}: {detail}");
    Err(Error::NonFiniteLoss {
        epoch,
        step,
        detail,
    })
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let loss = config.resolve_loss()?;
        let mut init = SeededRng::derive(config.seed, "init");
        let dtype = DType::F32;
        let generators = match config.mode {
            TrainMode::Pix2pix => Generators::Single(UNetGenerator::new(
                config.generator.clone(),
                &mut init,
                dtype,
            )?),
            TrainMode::Pairwise => Generators::Pair(PairwiseGenerator::new(
                config.generator.clone(),
                loss.sharing,
                &mut init,
                dtype,
            )?),
        };
        let n_disc = if config.two_discriminators { 2 } else { 1 };
        let discs = (0..n_disc)
            .map(|_| PatchDiscriminator::new(config.discriminator.clone(), &mut init, dtype))
            .collect::<Result<Vec<_>>>()?;
        let opt_g = Adam::new(config.adam(), &generators.stores())?;
        let d_stores: Vec<(&str, &ParamStore)> = discs
            .iter()
            .zip(["d.", "d2."])
            .map(|(d, p)| (p, d.params()))
            .collect();
        let opt_d = Adam::new(config.adam(), &d_stores)?;
        let rng = SeededRng::derive(config.seed, "dropout");
        let state = TrainState {
            epoch: 0,
            step: 0,
            ema: BTreeMap::new(),
            rng: rng.state(),
        };
        Ok(Self {
            config,
            loss,
            generators,
            discs,
            opt_g,
            opt_d,
            rng,
            state,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn generators(&self) -> &Generators {
        &self.generators
    }

    pub fn discriminators(&self) -> &[PatchDiscriminator] {
        &self.discs
    }

    pub fn state(&self) -> TrainState {
        TrainState {
            rng: self.rng.state(),
            ..self.state.clone()
        }
    }

    pub fn sharing_enabled(&self) -> bool {
        self.loss.sharing.enabled()
    }

    /// Loss weights for the epoch currently being trained.
    pub fn current_weights(&self) -> LossWeights {
        self.loss
            .schedule
            .at(self.state.epoch + 1, self.config.epochs)
    }

    fn record(&mut self, d_loss: f64, g: LossBreakdown) -> StepReport {
        let report = StepReport {
            epoch: self.state.epoch + 1,
            step: self.state.step,
            d_loss,
            g,
        };
        let mut put = |k: &str, v: f64| {
            self.state
                .ema
                .entry(k.to_string())
                .and_modify(|e| *e = EMA_DECAY * *e + (1.0 - EMA_DECAY) * v)
                .or_insert(v);
        };
        put("d", d_loss);
        for t in &report.g.terms {
            put(t.term.name(), t.raw);
        }
        put("total", report.g.total);
        self.state.step += 1;
        report
    }

    /// One pix2pix step: D on `(X, GT)` real and `(X, G(X))` fake, then G.
    pub fn train_step_pix2pix(&mut self, batch: &PairBatch) -> Result<StepReport> {
        let Generators::Single(g) = &self.generators else {
            return Err(Error::InvalidConfig(
                "pix2pix step on a pairwise trainer".into(),
            ));
        };
        let (epoch, step) = (self.state.epoch + 1, self.state.step);
        let w = self.current_weights();
        let conditional = self.config.discriminator.conditional;
        let d = &self.discs[0];
        let mut mode = Mode::Train(&mut self.rng);

        let y = g.forward(&batch.side, &mut mode)?;
        let real = d.forward(cond(conditional, &batch.side), &batch.frontal, &mut mode)?;
        let fake = d.forward(cond(conditional, &batch.side), &y.detach(), &mut mode)?;
        let d_loss = adversarial_d_loss(&real, &fake)?;
        let d_loss = if self.config.halve_d_loss {
            d_loss
        } else {
            (d_loss * 2.0)?
        };
        let d_val = scalar(&d_loss)?;
        let stores = || {
            non_finite_params(&self.generators.stores())
                .map(|b| format!("non-finite parameters: {b:?}"))
        };
        guard(d_val, "discriminator loss", epoch, step, stores)?;
        self.opt_d.step(&d_loss.backward()?)?;

        let fake_logits = if w.adv > 0.0 {
            Some(d.forward(cond(conditional, &batch.side), &y, &mut mode)?)
        } else {
            None
        };
        let gi = if w.id > 0.0 {
            Some(g.forward(&batch.frontal, &mut mode)?)
        } else {
            None
        };
        let inputs = GeneratorLossInputs {
            left: BranchInputs {
                fake_logits: fake_logits.as_ref(),
                output: Some(&y),
                ground_truth: Some(&batch.frontal),
                ground_identity: gi.as_ref(),
            },
            right: None,
        };
        let loss = composite_generator_loss(&inputs, &w, self.config.gdl, TrainMode::Pix2pix)?;
        let breakdown = loss.breakdown.clone();
        guard(breakdown.total, "generator loss", epoch, step, || {
            Ok(format!(
                "breakdown {}",
                serde_json::to_string(&breakdown).unwrap_or_default()
            ))
        })?;
        self.opt_g.step(&loss.total.backward()?)?;
        Ok(self.record(d_val, loss.breakdown))
    }

    /// One pairwise step: D on both branches, then both generators on the
    /// composite loss including the pair term; shared blocks are verified
    /// afterwards.
    pub fn train_step_pairwise(&mut self, batch: &TripletBatch) -> Result<StepReport> {
        let Generators::Pair(p) = &self.generators else {
            return Err(Error::InvalidConfig(
                "pairwise step on a pix2pix trainer".into(),
            ));
        };
        let (epoch, step) = (self.state.epoch + 1, self.state.step);
        let w = self.current_weights();
        let conditional = self.config.discriminator.conditional;
        let (dl, dr) = (
            &self.discs[0],
            self.discs.last().expect("at least one discriminator"),
        );
        let mut mode = Mode::Train(&mut self.rng);

        let (yl, yr) = p.forward(&batch.left, &batch.right, &mut mode)?;
        let side_loss =
            |d: &PatchDiscriminator, x: &Tensor, y: &Tensor, mode: &mut Mode| -> Result<Tensor> {
                let real = d.forward(cond(conditional, x), &batch.frontal, mode)?;
                let fake = d.forward(cond(conditional, x), &y.detach(), mode)?;
                adversarial_d_loss(&real, &fake)
            };
        let sum = (side_loss(dl, &batch.left, &yl, &mut mode)?
            + side_loss(dr, &batch.right, &yr, &mut mode)?)?;
        // A shared discriminator sees both branches per step; average them.
        let d_loss = if self.discs.len() == 1 {
            (sum * 0.5)?
        } else {
            sum
        };
        let d_loss = if self.config.halve_d_loss {
            d_loss
        } else {
            (d_loss * 2.0)?
        };
        let d_val = scalar(&d_loss)?;
        let stores = || {
            non_finite_params(&self.generators.stores())
                .map(|b| format!("non-finite parameters: {b:?}"))
        };
        guard(d_val, "discriminator loss", epoch, step, stores)?;
        self.opt_d.step(&d_loss.backward()?)?;

        let adv = |d: &PatchDiscriminator,
                   x: &Tensor,
                   y: &Tensor,
                   mode: &mut Mode|
         -> Result<Option<PatchGrid>> {
            if w.adv > 0.0 {
                Ok(Some(d.forward(cond(conditional, x), y, mode)?))
            } else {
                Ok(None)
            }
        };
        let fl = adv(dl, &batch.left, &yl, &mut mode)?;
        let fr = adv(dr, &batch.right, &yr, &mut mode)?;
        let (gil, gir) = if w.id > 0.0 {
            (
                Some(p.left.forward(&batch.frontal, &mut mode)?),
                Some(p.right.forward(&batch.frontal, &mut mode)?),
            )
        } else {
            (None, None)
        };
        let gt = &batch.frontal;
        let inputs = GeneratorLossInputs {
            left: branch(&fl, &yl, gt, &gil),
            right: Some(branch(&fr, &yr, gt, &gir)),
        };
        let loss = composite_generator_loss(&inputs, &w, self.config.gdl, TrainMode::Pairwise)?;
        let breakdown = loss.breakdown.clone();
        guard(breakdown.total, "generator loss", epoch, step, || {
            Ok(format!(
                "breakdown {}",
                serde_json::to_string(&breakdown).unwrap_or_default()
            ))
        })?;
        self.opt_g.step(&loss.total.backward()?)?;
        if p.sharing().enabled() {
            p.sync_shared_blocks()?;
        }
        Ok(self.record(d_val, loss.breakdown))
    }

    /// Runs the remaining schedule, appending to the loss logs under `out`
    /// and writing checkpoints to `out/ckpt/epoch_NNN/`.
    pub fn train(
        &mut self,
        manifest: &DatasetManifest,
        images: &dyn ImageSource,
        out: &Path,
    ) -> Result<TrainOutcome> {
        let pairwise = self.config.mode == TrainMode::Pairwise;
        let mut samples = source::training_samples(manifest, pairwise);
        if samples.is_empty() {
            return Err(Error::InvalidConfig(if pairwise {
                "pairwise mode requires a manifest with training triplets".into()
            } else {
                "manifest has no training pairs".into()
            }));
        }
        let size = manifest.image_size as usize;
        self.config
            .generator
            .check_input(&[1, self.config.generator.in_channels, size, size])?;
        if self.config.discriminator.grid_size(size).is_none() {
            return Err(Error::InvalidConfig(format!(
                "{size}px images are too small for the discriminator"
            )));
        }
        if let Some(n) = self.config.overfit_samples {
            samples.truncate(n);
        }

        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let _lock = DirLock::acquire(out)?;
        let fresh = self.state.step == 0 && self.state.epoch == 0;
        let mut loss_log = open_log(&out.join(LOSS_LOG), fresh)?;
        let mut epoch_log = open_log(&out.join(EPOCH_LOG), fresh)?;
        let mut last_checkpoint = None;
        let batch_size = self.config.batch_size;

        let mut stopped = false;
        for epoch in self.state.epoch + 1..=self.config.epochs {
            let started = Instant::now();
            let mut order: Vec<usize> = (0..samples.len()).collect();
            SeededRng::derive(self.config.seed, &format!("order-{epoch}")).shuffle(&mut order);
            let mut steps = 0;
            for chunk in order.chunks(batch_size) {
                if self.config.max_steps.is_some_and(|m| self.state.step >= m) {
                    stopped = true;
                    break;
                }
                let picked: Vec<&[usize]> = chunk.iter().map(|&i| samples[i].as_slice()).collect();
                let report = if pairwise {
                    let batch = TripletBatch {
                        left: source::stack_slot(images, &picked, 0)?,
                        right: source::stack_slot(images, &picked, 1)?,
                        frontal: source::stack_slot(images, &picked, 2)?,
                    };
                    self.train_step_pairwise(&batch)
                } else {
                    let batch = PairBatch {
                        side: source::stack_slot(images, &picked, 0)?,
                        frontal: source::stack_slot(images, &picked, 1)?,
                    };
                    self.train_step_pix2pix(&batch)
                };
                let report = match report {
                    Ok(r) => r,
                    Err(e) => {
                        if let Error::NonFiniteLoss {
                            epoch,
                            step,
                            detail,
                        } = &e
                        {
                            let dump = json!({"epoch": epoch, "step": step, "detail": detail, "ema": self.state.ema});
                            let _ =
                                fs::write(out.join("nonfinite_dump.json"), format!("{dump:#}\n"));
                        }
                        loss_log.flush().map_err(|e| Error::io(out, e))?;
                        return Err(e);
                    }
                };
                for rec in report.records() {
                    writeln!(
                        loss_log,
                        "{}",
                        serde_json::to_string(&rec).expect("record serializes")
                    )
                    .map_err(|e| Error::io(out.join(LOSS_LOG), e))?;
                }
                steps += 1;
            }
            self.state.epoch = epoch;
            let elapsed = started.elapsed().as_secs_f64();
            log::info!(
                "epoch {epoch}/{}: {steps} steps in {elapsed:.1}s, ema total {:.4}",
                self.config.epochs,
                self.state.ema.get("total").copied().unwrap_or(f64::NAN)
            );
            let rec = json!({ "epoch": epoch, "steps": steps, "ema": self.state.ema, "weights": self.current_weights_at(epoch) });
            writeln!(epoch_log, "{rec}").map_err(|e| Error::io(out.join(EPOCH_LOG), e))?;
            loss_log
                .flush()
                .map_err(|e| Error::io(out.join(LOSS_LOG), e))?;
            epoch_log
                .flush()
                .map_err(|e| Error::io(out.join(EPOCH_LOG), e))?;
            if epoch % self.config.checkpoint_every == 0 || epoch == self.config.epochs || stopped {
                let dir = out.join(CKPT_DIR).join(epoch_dir_name(epoch));
                self.save_checkpoint(&dir)?;
                last_checkpoint = Some(dir);
            }
            if stopped {
                break;
            }
        }
        Ok(TrainOutcome {
            epochs_completed: self.state.epoch,
            steps: self.state.step,
            last_checkpoint,
            ema: self.state.ema.clone(),
        })
    }

    fn current_weights_at(&self, epoch: usize) -> LossWeights {
        self.loss.schedule.at(epoch, self.config.epochs)
    }

    /// Writes `g1.bin`, `g2.bin` (pairwise), `d.bin` (and `d2.bin`) and
    /// `state.bin` into `dir`, staged in a sibling directory and renamed.
    pub fn save_checkpoint(&self, dir: &Path) -> Result<()> {
        let parent = dir.parent().unwrap_or(Path::new("."));
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        let staging = dir.with_extension("partial");
        if staging.exists() {
            fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
        }
        fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
        self.generators
            .left()
            .to_checkpoint()?
            .save(&staging.join("g1.bin"))?;
        if let Some(r) = self.generators.right() {
            r.to_checkpoint()?.save(&staging.join("g2.bin"))?;
        }
        for (d, file) in self.discs.iter().zip(["d.bin", "d2.bin"]) {
            d.to_checkpoint()?.save(&staging.join(file))?;
        }
        let meta = json!({
            "config": self.config,
            "state": self.state(),
            "opt_g_steps": self.opt_g.steps_taken(),
            "opt_d_steps": self.opt_d.steps_taken(),
        });
        let mut ck = Checkpoint::new(STATE_TAG, meta);
        self.opt_g.save_into("opt_g.", &mut ck)?;
        self.opt_d.save_into("opt_d.", &mut ck)?;
        ck.save(&staging.join("state.bin"))?;
        if dir.exists() {
            fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::rename(&staging, dir).map_err(|e| Error::io(dir, e))?;
        Ok(())
    }

    /// The config a checkpoint directory was written with.
    pub fn stored_config(dir: &Path) -> Result<TrainConfig> {
        let ck = Checkpoint::load(&dir.join("state.bin"))?.expect_tag(STATE_TAG)?;
        serde_json::from_value(ck.metadata["config"].clone())
            .map_err(|e| Error::Checkpoint(format!("stored config: {e}")))
    }

    /// Rebuilds a trainer from a checkpoint directory. `override_config`
    /// may change only the run length and bookkeeping fields.
    pub fn resume(dir: &Path, override_config: Option<TrainConfig>) -> Result<Self> {
        let state_ck = Checkpoint::load(&dir.join("state.bin"))?.expect_tag(STATE_TAG)?;
        let bad = |m: String| Error::Checkpoint(m);
        let stored: TrainConfig = serde_json::from_value(state_ck.metadata["config"].clone())
            .map_err(|e| bad(format!("stored config: {e}")))?;
        let state: TrainState = serde_json::from_value(state_ck.metadata["state"].clone())
            .map_err(|e| bad(format!("stored state: {e}")))?;
        let steps = |k: &str| {
            state_ck.metadata[k]
                .as_u64()
                .ok_or_else(|| bad(format!("state lacks `{k}`")))
        };
        let config = match override_config {
            None => stored,
            Some(c) => {
                let comparable = TrainConfig {
                    epochs: stored.epochs,
                    checkpoint_every: stored.checkpoint_every,
                    max_steps: stored.max_steps,
                    ..c.clone()
                };
                if comparable != stored {
                    return Err(bad("config differs from the checkpointed run beyond epochs/checkpoint_every/max_steps".into()));
                }
                c
            }
        };
        let mut t = Self::new(config)?;
        let load = |file: &str| Checkpoint::load(&dir.join(file));
        match &t.generators {
            Generators::Single(g) => g.load_checkpoint(&load("g1.bin")?)?,
            Generators::Pair(p) => p.load_checkpoints(&load("g1.bin")?, &load("g2.bin")?)?,
        }
        for (d, file) in t.discs.iter().zip(["d.bin", "d2.bin"]) {
            d.load_checkpoint(&load(file)?)?;
        }
        t.opt_g
            .load_from("opt_g.", &state_ck, steps("opt_g_steps")?)?;
        t.opt_d
            .load_from("opt_d.", &state_ck, steps("opt_d_steps")?)?;
        t.rng = SeededRng::from_state(&state.rng);
        t.state = state;
        Ok(t)
    }
}

fn cond(on: bool, x: &Tensor) -> Option<&Tensor> {
    on.then_some(x)
}

fn branch<'a>(
    fake: &'a Option<PatchGrid>,
    y: &'a Tensor,
    gt: &'a Tensor,
    gi: &'a Option<Tensor>,
) -> BranchInputs<'a> {
    BranchInputs {
        fake_logits: fake.as_ref(),
        output: Some(y),
        ground_truth: Some(gt),
        ground_identity: gi.as_ref(),
    }
}

fn open_log(path: &Path, truncate: bool) -> Result<BufWriter<File>> {
    let f = if truncate {
        File::create(path)
    } else {
        OpenOptions::new().create(true).append(true).open(path)
    };
    Ok(BufWriter::new(f.map_err(|e| Error::io(path, e))?))
}

/// Highest-numbered complete `epoch_NNN` directory under `out/ckpt`.
pub fn latest_checkpoint(out: &Path) -> Option<PathBuf> {
    let root = out.join(CKPT_DIR);
    let mut best: Option<(usize, PathBuf)> = None;
    for entry in fs::read_dir(&root).ok()?.flatten() {
        let name = entry.file_name().to_string_lossy().into_owned();
        let Some(n) = name
            .strip_prefix("epoch_")
            .and_then(|s| s.parse::<usize>().ok())
        else {
            continue;
        };
        if entry.path().join("state.bin").is_file() && best.as_ref().is_none_or(|(b, _)| n > *b) {
            best = Some((n, entry.path()));
        }
    }
    best.map(|(_, p)| p)
}

/// Reads `loss_log.jsonl` records.
pub fn read_loss_log(path: &Path) -> Result<Vec<LossRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::ManifestParse {
                line: i + 1,
                reason: format!("loss log: {e}"),
            })
        })
        .collect()
}

/// The term names a breakdown may contain, in log order.
pub fn logged_terms() -> Vec<&'static str> {
    std::iter::once("d")
        .chain(LossTerm::ALL.iter().map(|t| t.name()))
        .collect()
}
