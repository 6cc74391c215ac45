//! Corpus scanning, pose filtering, pairing and the line-delimited manifest.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::crop::CropBox;
use super::pose::{PoseLabel, PoseMap, Side};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub const MANIFEST_FORMAT: &str = "frontalize-manifest";
pub const MANIFEST_VERSION: u32 = 1;

/// Matches Color FERET style names: `<subject>_<session>_<pose>[_<variant>].<ext>`.
pub const DEFAULT_FILENAME_PATTERN: &str = r"^(?P<subject>[0-9A-Za-z]+)_(?P<session>[0-9A-Za-z]+)_(?P<pose>[0-9A-Za-z]+)(?:_[0-9A-Za-z]+)?\.(?i:png|jpe?g|ppm)$";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceRecord {
    pub subject_id: String,
    pub session_id: String,
    pub pose: PoseLabel,
    /// Path relative to the corpus root, `/`-separated.
    pub source_path: String,
    pub crop_box: Option<CropBox>,
    pub fallback_crop: bool,
}

impl FaceRecord {
    /// `<subject>_<session>_<pose code>`, unique within a manifest.
    pub fn id(&self) -> String {
        format!("{}_{}_{}", self.subject_id, self.session_id, self.pose.code)
    }

    /// File name of the cropped image under the output `images/` directory.
    pub fn image_file(&self) -> String {
        format!("{}.png", self.id())
    }

    fn session_key(&self) -> (&str, &str) {
        (&self.subject_id, &self.session_id)
    }
}

/// Indices into [`DatasetManifest::records`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairedSample {
    pub side: usize,
    pub frontal: usize,
    pub split: Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TripletSample {
    pub left: usize,
    pub right: usize,
    pub frontal: usize,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub image_size: u32,
    pub records: Vec<FaceRecord>,
    /// Split of each record, parallel to `records`.
    pub record_splits: Vec<Split>,
    pub pairs: Vec<PairedSample>,
    pub triplets: Vec<TripletSample>,
}

#[derive(Debug, Clone)]
pub struct ManifestOptions {
    pub pose_map: PoseMap,
    pub filename_pattern: String,
    pub min_angle: f64,
    pub max_angle: f64,
    pub split_ratio: f64,
    pub seed: u64,
    pub image_size: u32,
}

impl Default for ManifestOptions {
    fn default() -> Self {
        Self {
            pose_map: PoseMap::color_feret(),
            filename_pattern: DEFAULT_FILENAME_PATTERN.to_string(),
            min_angle: 60.0,
            max_angle: 90.0,
            split_ratio: 0.89,
            seed: 0,
            image_size: 256,
        }
    }
}

impl ManifestOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(0.0..=90.0).contains(&self.min_angle) || !(0.0..=90.0).contains(&self.max_angle) {
            return bad(format!(
                "angles must lie in [0, 90], got [{}, {})",
                self.min_angle, self.max_angle
            ));
        }
        if self.min_angle > self.max_angle {
            return bad(format!(
                "min angle {} exceeds max angle {}",
                self.min_angle, self.max_angle
            ));
        }
        if !(0.0..=1.0).contains(&self.split_ratio) {
            return bad(format!("split ratio {} outside [0, 1]", self.split_ratio));
        }
        if self.image_size == 0 {
            return bad("image size must be positive".into());
        }
        Regex::new(&self.filename_pattern).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Ok(())
    }
}

/// Keeps side records with `min_deg <= angle < max_deg` and every frontal
/// record, preserving order.
pub fn filter_by_angle(records: &[FaceRecord], min_deg: f64, max_deg: f64) -> Vec<FaceRecord> {
    records
        .iter()
        .filter(|r| {
            r.pose.is_frontal()
                || (min_deg <= r.pose.angle_degrees && r.pose.angle_degrees < max_deg)
        })
        .cloned()
        .collect()
}

/// Outcome of matching one file name against the corpus pattern.
#[derive(Debug, Clone, PartialEq)]
pub enum NameMatch {
    Face {
        subject: String,
        session: String,
        pose: PoseLabel,
    },
    NoMatch,
    UnknownPose(String),
}

/// Errors only when the pattern lacks one of the three named groups.
pub fn parse_file_name(pattern: &Regex, name: &str, pose_map: &PoseMap) -> Result<NameMatch> {
    let Some(caps) = pattern.captures(name) else {
        return Ok(NameMatch::NoMatch);
    };
    let (Some(subject), Some(session), Some(code)) = (
        caps.name("subject"),
        caps.name("session"),
        caps.name("pose"),
    ) else {
        return Err(Error::InvalidConfig(
            "filename pattern must define `subject`, `session` and `pose` groups".into(),
        ));
    };
    Ok(match pose_map.parse_code(code.as_str()) {
        Ok(pose) => NameMatch::Face {
            subject: subject.as_str().into(),
            session: session.as_str().into(),
            pose,
        },
        Err(_) => NameMatch::UnknownPose(code.as_str().into()),
    })
}

/// Walks `root` and parses every file name matching the pattern. Files whose
/// name does not match, or whose pose code is absent from the map, are skipped.
pub fn scan_corpus(root: &Path, opts: &ManifestOptions) -> Result<Vec<FaceRecord>> {
    let pattern =
        Regex::new(&opts.filename_pattern).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(root).to_path_buf();
            Error::io(path, e.into())
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let name = entry.file_name().to_string_lossy();
        let (subject, session, pose) = match parse_file_name(&pattern, &name, &opts.pose_map)? {
            NameMatch::Face {
                subject,
                session,
                pose,
            } => (subject, session, pose),
            NameMatch::NoMatch => {
                log::debug!(
                    "skipping {}: name does not match pattern",
                    entry.path().display()
                );
                continue;
            }
            NameMatch::UnknownPose(code) => {
                log::warn!(
                    "skipping {}: unknown pose code `{code}`",
                    entry.path().display()
                );
                continue;
            }
        };
        let rel = entry.path().strip_prefix(root).unwrap_or(entry.path());
        let source_path = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        out.push(FaceRecord {
            subject_id: subject,
            session_id: session,
            pose,
            source_path,
            crop_box: None,
            fallback_crop: false,
        });
    }
    Ok(out)
}

/// Scans, filters, pairs and splits a corpus.
pub fn build_manifest(root: &Path, opts: &ManifestOptions) -> Result<DatasetManifest> {
    opts.validate()?;
    let scanned = scan_corpus(root, opts)?;
    let manifest = assemble_manifest(scanned, opts)?;
    if manifest.records.iter().all(|r| !r.pose.is_frontal()) {
        return Err(Error::EmptyCorpus(root.to_path_buf()));
    }
    Ok(manifest)
}

/// Pure assembly step of [`build_manifest`], over already-parsed records.
pub fn assemble_manifest(
    records: Vec<FaceRecord>,
    opts: &ManifestOptions,
) -> Result<DatasetManifest> {
    let mut records = filter_by_angle(&records, opts.min_angle, opts.max_angle);
    records.sort_by(|a, b| {
        (&a.subject_id, &a.session_id, &a.pose.code, &a.source_path).cmp(&(
            &b.subject_id,
            &b.session_id,
            &b.pose.code,
            &b.source_path,
        ))
    });
    let before = records.len();
    records.dedup_by(|b, a| a.id() == b.id());
    if records.len() != before {
        log::warn!(
            "dropped {} duplicate (subject, session, pose) records",
            before - records.len()
        );
    }

    let subjects: BTreeSet<&str> = records.iter().map(|r| r.subject_id.as_str()).collect();
    let split_of = split_subjects(subjects.into_iter().collect(), opts.split_ratio, opts.seed);
    let record_splits: Vec<Split> = records
        .iter()
        .map(|r| split_of[r.subject_id.as_str()])
        .collect();

    // Records are sorted, so each session is a contiguous run and the
    // lowest-coded frontal is the session's target.
    let mut sessions: BTreeMap<(&str, &str), Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        sessions.entry(r.session_key()).or_default().push(i);
    }

    let mut pairs = Vec::new();
    let mut triplets = Vec::new();
    for members in sessions.values() {
        let Some(&frontal) = members.iter().find(|&&i| records[i].pose.is_frontal()) else {
            continue;
        };
        let split = record_splits[frontal];
        let mut by_angle: BTreeMap<u64, (Option<usize>, Option<usize>)> = BTreeMap::new();
        for &i in members {
            let pose = &records[i].pose;
            if pose.is_frontal() {
                continue;
            }
            pairs.push(PairedSample {
                side: i,
                frontal,
                split,
            });
            let slot = by_angle.entry(pose.angle_degrees.to_bits()).or_default();
            match pose.side {
                Side::Left => {
                    slot.0.get_or_insert(i);
                }
                Side::Right => {
                    slot.1.get_or_insert(i);
                }
                Side::Frontal => unreachable!(),
            }
        }
        for (left, right) in by_angle.into_values() {
            if let (Some(left), Some(right)) = (left, right) {
                triplets.push(TripletSample {
                    left,
                    right,
                    frontal,
                    split,
                });
            }
        }
    }

    Ok(DatasetManifest {
        image_size: opts.image_size,
        records,
        record_splits,
        pairs,
        triplets,
    })
}

/// Deterministic subject-level split. With two or more subjects and a ratio
/// strictly between 0 and 1, both sides receive at least one subject.
pub fn split_subjects(mut subjects: Vec<&str>, ratio: f64, seed: u64) -> HashMap<&str, Split> {
    subjects.sort_unstable();
    let n = subjects.len();
    let mut n_train = (ratio * n as f64).round() as usize;
    if n >= 2 && ratio > 0.0 && ratio < 1.0 {
        n_train = n_train.clamp(1, n - 1);
    }
    let mut rng = SeededRng::derive(seed, "subject-split");
    rng.shuffle(&mut subjects);
    subjects
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            (
                s,
                if i < n_train {
                    Split::Train
                } else {
                    Split::Test
                },
            )
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    kind: String,
    format: String,
    version: u32,
    image_size: u32,
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    kind: String,
    id: String,
    split: Split,
    #[serde(flatten)]
    record: FaceRecord,
}

#[derive(Serialize, Deserialize)]
struct PairLine {
    kind: String,
    side: String,
    frontal: String,
    split: Split,
}

#[derive(Serialize, Deserialize)]
struct TripletLine {
    kind: String,
    left: String,
    right: String,
    frontal: String,
    split: Split,
}

impl DatasetManifest {
    pub fn record(&self, i: usize) -> &FaceRecord {
        &self.records[i]
    }

    pub fn pairs_in(&self, split: Split) -> impl Iterator<Item = &PairedSample> {
        self.pairs.iter().filter(move |p| p.split == split)
    }

    pub fn triplets_in(&self, split: Split) -> impl Iterator<Item = &TripletSample> {
        self.triplets.iter().filter(move |t| t.split == split)
    }

    pub fn subjects_in(&self, split: Split) -> BTreeSet<&str> {
        self.records
            .iter()
            .zip(&self.record_splits)
            .filter(|(_, s)| **s == split)
            .map(|(r, _)| r.subject_id.as_str())
            .collect()
    }

    pub fn find(&self, id: &str) -> Option<usize> {
        self.records.iter().position(|r| r.id() == id)
    }

    /// Checks every structural invariant; parsed manifests pass through this.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ManifestParse { line: 0, reason: m });
        if self.records.len() != self.record_splits.len() {
            return bad("record/split length mismatch".into());
        }
        let mut ids = BTreeSet::new();
        for r in &self.records {
            if !ids.insert(r.id()) {
                return bad(format!("duplicate record {}", r.id()));
            }
            if (r.pose.angle_degrees == 0.0) != r.pose.is_frontal() {
                return bad(format!("record {} has inconsistent pose", r.id()));
            }
        }
        let train = self.subjects_in(Split::Train);
        if let Some(s) = self.subjects_in(Split::Test).intersection(&train).next() {
            return bad(format!("subject {s} appears in both splits"));
        }
        let n = self.records.len();
        let same_session = |a: &FaceRecord, b: &FaceRecord| a.session_key() == b.session_key();
        for p in &self.pairs {
            if p.side >= n || p.frontal >= n {
                return bad("pair references a missing record".into());
            }
            let (s, f) = (&self.records[p.side], &self.records[p.frontal]);
            if !same_session(s, f) || s.pose.is_frontal() || !f.pose.is_frontal() {
                return bad(format!("invalid pair {} / {}", s.id(), f.id()));
            }
        }
        for t in &self.triplets {
            if t.left >= n || t.right >= n || t.frontal >= n {
                return bad("triplet references a missing record".into());
            }
            let (l, r, f) = (
                &self.records[t.left],
                &self.records[t.right],
                &self.records[t.frontal],
            );
            let ok = same_session(l, f)
                && same_session(r, f)
                && l.pose.side == Side::Left
                && r.pose.side == Side::Right
                && f.pose.is_frontal()
                && l.pose.angle_degrees == r.pose.angle_degrees;
            if !ok {
                return bad(format!(
                    "invalid triplet {} / {} / {}",
                    l.id(),
                    r.id(),
                    f.id()
                ));
            }
        }
        Ok(())
    }

    /// Line-delimited JSON: a header, then records, pairs and triplets.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |v: String| {
            out.push_str(&v);
            out.push('\n');
        };
        let header = HeaderLine {
            kind: "header".into(),
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            image_size: self.image_size,
        };
        push(serde_json::to_string(&header).expect("header serializes"));
        for (r, split) in self.records.iter().zip(&self.record_splits) {
            let line = RecordLine {
                kind: "record".into(),
                id: r.id(),
                split: *split,
                record: r.clone(),
            };
            push(serde_json::to_string(&line).expect("record serializes"));
        }
        let id = |i: usize| self.records[i].id();
        for p in &self.pairs {
            let line = PairLine {
                kind: "pair".into(),
                side: id(p.side),
                frontal: id(p.frontal),
                split: p.split,
            };
            push(serde_json::to_string(&line).expect("pair serializes"));
        }
        for t in &self.triplets {
            let line = TripletLine {
                kind: "triplet".into(),
                left: id(t.left),
                right: id(t.right),
                frontal: id(t.frontal),
                split: t.split,
            };
            push(serde_json::to_string(&line).expect("triplet serializes"));
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let err = |line: usize, reason: String| Error::ManifestParse {
            line: line + 1,
            reason,
        };
        let (n0, first) = lines
            .next()
            .ok_or_else(|| err(0, "empty manifest".into()))?;
        let header: HeaderLine = serde_json::from_str(first).map_err(|e| err(n0, e.to_string()))?;
        if header.kind != "header" || header.format != MANIFEST_FORMAT {
            return Err(err(n0, "missing manifest header".into()));
        }
        if header.version != MANIFEST_VERSION {
            return Err(err(
                n0,
                format!("unsupported manifest version {}", header.version),
            ));
        }
        let mut m = DatasetManifest {
            image_size: header.image_size,
            records: Vec::new(),
            record_splits: Vec::new(),
            pairs: Vec::new(),
            triplets: Vec::new(),
        };
        let mut index: HashMap<String, usize> = HashMap::new();
        for (n, line) in lines {
            let value: serde_json::Value =
                serde_json::from_str(line).map_err(|e| err(n, e.to_string()))?;
            let kind = value
                .get("kind")
                .and_then(|k| k.as_str())
                .unwrap_or_default()
                .to_string();
            let lookup = |index: &HashMap<String, usize>, id: &str| {
                index
                    .get(id)
                    .copied()
                    .ok_or_else(|| err(n, format!("unknown record id `{id}`")))
            };
            match kind.as_str() {
                "record" => {
                    let r: RecordLine =
                        serde_json::from_value(value).map_err(|e| err(n, e.to_string()))?;
                    if r.id != r.record.id() {
                        return Err(err(
                            n,
                            format!("record id `{}` does not match its fields", r.id),
                        ));
                    }
                    if index.insert(r.id, m.records.len()).is_some() {
                        return Err(err(n, "duplicate record id".into()));
                    }
                    m.records.push(r.record);
                    m.record_splits.push(r.split);
                }
                "pair" => {
                    let p: PairLine =
                        serde_json::from_value(value).map_err(|e| err(n, e.to_string()))?;
                    m.pairs.push(PairedSample {
                        side: lookup(&index, &p.side)?,
                        frontal: lookup(&index, &p.frontal)?,
                        split: p.split,
                    });
                }
                "triplet" => {
                    let t: TripletLine =
                        serde_json::from_value(value).map_err(|e| err(n, e.to_string()))?;
                    m.triplets.push(TripletSample {
                        left: lookup(&index, &t.left)?,
                        right: lookup(&index, &t.right)?,
                        frontal: lookup(&index, &t.frontal)?,
                        split: t.split,
                    });
                }
                other => return Err(err(n, format!("unknown line kind `{other}`"))),
            }
        }
        m.validate()?;
        Ok(m)
    }

    /// Short human-readable count summary.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for split in [Split::Train, Split::Test] {
            let records = self.record_splits.iter().filter(|x| **x == split).count();
            let _ = writeln!(
                s,
                "{split:?}: {} subjects, {records} images, {} pairs, {} triplets",
                self.subjects_in(split).len(),
                self.pairs_in(split).count(),
                self.triplets_in(split).count(),
            );
        }
        s
    }
}
