//! Named loss-weight presets and their plain key-value text form.
//!
//! ```text
//! name = pairwise-best-avg
//! mode = pairwise
//! sharing = true
//! adv = 10
//! l1 = 0
//! gdl = 0
//! sym = 0
//! id = 0
//! pair = 10 -> 2
//! ```
//!
//! `a -> b` decays a weight linearly from `a` in the first epoch to `b` in
//! the last.

use std::fmt::Write as _;

use super::{LossTerm, LossWeights, TrainMode};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightSchedule {
    pub start: LossWeights,
    /// Weights at the final epoch; `None` keeps `start` throughout.
    pub end: Option<LossWeights>,
}

impl WeightSchedule {
    pub fn constant(w: LossWeights) -> Self {
        Self {
            start: w,
            end: None,
        }
    }

    /// Weights for 1-based `epoch` of `epochs`.
    pub fn at(&self, epoch: usize, epochs: usize) -> LossWeights {
        let Some(end) = self.end else {
            return self.start;
        };
        let frac = if epochs <= 1 {
            0.0
        } else {
            (epoch.saturating_sub(1)) as f64 / (epochs - 1) as f64
        };
        let frac = frac.clamp(0.0, 1.0);
        let mut w = self.start;
        for t in LossTerm::ALL {
            let (a, b) = (self.start.get(t), end.get(t));
            w.set(t, a + (b - a) * frac);
        }
        w
    }

    pub fn validate(&self) -> Result<()> {
        self.start.validate()?;
        if let Some(end) = &self.end {
            end.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: String,
    pub mode: TrainMode,
    pub schedule: WeightSchedule,
    pub sharing: bool,
}

const fn w(adv: f64, l1: f64, gdl: f64, sym: f64, id: f64, pair: f64) -> LossWeights {
    LossWeights::new(adv, l1, gdl, sym, id, pair)
}

pub const PRESET_NAMES: [&str; 7] = [
    "pix2pix-default",
    "pix2pix-best",
    "pairwise-no-l1",
    "pairwise-best-overall",
    "pairwise-share",
    "pairwise-share-decay",
    "pairwise-best-avg",
];

pub fn named_preset(name: &str) -> Option<Preset> {
    let (mode, start, end, sharing) = match name {
        "pix2pix-default" => (TrainMode::Pix2pix, w(1., 120., 0., 0., 0., 0.), None, false),
        "pix2pix-best" => (TrainMode::Pix2pix, w(20., 3., 0.1, 0., 5., 0.), None, false),
        "pairwise-no-l1" => (
            TrainMode::Pairwise,
            w(10., 0., 0., 0., 5., 10.),
            None,
            false,
        ),
        "pairwise-best-overall" => (
            TrainMode::Pairwise,
            w(10., 3., 0., 0., 5., 10.),
            None,
            false,
        ),
        "pairwise-share" => (TrainMode::Pairwise, w(10., 3., 0., 0., 5., 0.), None, true),
        "pairwise-share-decay" => (
            TrainMode::Pairwise,
            w(10., 0., 0., 0., 10., 10.),
            Some(w(10., 0., 0., 0., 5., 2.)),
            true,
        ),
        "pairwise-best-avg" => (
            TrainMode::Pairwise,
            w(10., 0., 0., 0., 0., 10.),
            Some(w(10., 0., 0., 0., 0., 2.)),
            true,
        ),
        _ => return None,
    };
    Some(Preset {
        name: name.to_string(),
        mode,
        schedule: WeightSchedule { start, end },
        sharing,
    })
}

impl Preset {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "name = {}", self.name);
        let _ = writeln!(
            s,
            "mode = {}",
            match self.mode {
                TrainMode::Pix2pix => "pix2pix",
                TrainMode::Pairwise => "pairwise",
            }
        );
        let _ = writeln!(s, "sharing = {}", self.sharing);
        for t in LossTerm::ALL {
            let a = self.schedule.start.get(t);
            match self.schedule.end.map(|e| e.get(t)) {
                Some(b) if b != a => {
                    let _ = writeln!(s, "{} = {a} -> {b}", t.name());
                }
                _ => {
                    let _ = writeln!(s, "{} = {a}", t.name());
                }
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |m: String| Error::InvalidConfig(format!("preset: {m}"));
        let mut name = None;
        let mut mode = None;
        let mut sharing = false;
        let mut start = LossWeights::new(0., 0., 0., 0., 0., 0.);
        let mut end = start;
        let mut decays = false;
        let mut seen = Vec::new();
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("expected `key = value`: `{raw}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.contains(&key.to_string()) {
                return Err(bad(format!("duplicate key `{key}`")));
            }
            seen.push(key.to_string());
            let num = |v: &str| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| bad(format!("`{key}`: `{v}` is not a number")))
            };
            match key {
                "name" => name = Some(value.to_string()),
                "mode" => {
                    mode = Some(match value {
                        "pix2pix" => TrainMode::Pix2pix,
                        "pairwise" => TrainMode::Pairwise,
                        other => return Err(bad(format!("unknown mode `{other}`"))),
                    })
                }
                "sharing" => {
                    sharing = value.parse::<bool>().map_err(|_| {
                        bad(format!("`sharing` must be true or false, got `{value}`"))
                    })?
                }
                k => {
                    let term =
                        LossTerm::from_name(k).ok_or_else(|| bad(format!("unknown key `{k}`")))?;
                    let (a, b) = match value.split_once("->") {
                        Some((a, b)) => {
                            decays = true;
                            (num(a)?, num(b)?)
                        }
                        None => {
                            let a = num(value)?;
                            (a, a)
                        }
                    };
                    start.set(term, a);
                    end.set(term, b);
                }
            }
        }
        let schedule = WeightSchedule {
            start,
            end: decays.then_some(end),
        };
        schedule.validate()?;
        Ok(Self {
            name: name.ok_or_else(|| bad("missing `name`".into()))?,
            mode: mode.ok_or_else(|| bad("missing `mode`".into()))?,
            schedule,
            sharing,
        })
    }
}
