//! Shared fixtures: synthetic face corpora and a desk-scale training config.

#![allow(dead_code)]

use std::path::Path;

use frontalize::data::{self, ManifestOptions, NoDetector, Side};
use frontalize::losses::TrainMode;
use frontalize::nn::{PatchDiscConfig, UNetConfig};
use frontalize::train::TrainConfig;
use image::{Rgb, RgbImage};

/// A cartoon face whose horizontal offset follows the pose and whose tint
/// follows the subject, so every side/frontal pair is learnable.
pub fn synthetic_face(size: u32, subject: u32, side: Side, angle: f64) -> RgbImage {
    let s = size as f64;
    let shift = match side {
        Side::Left => -1.0,
        Side::Right => 1.0,
        Side::Frontal => 0.0,
    } * angle
        / 90.0
        * 0.2
        * s;
    let (cx, cy) = (s / 2.0 + shift, s / 2.0);
    let tint = (subject * 37 % 80) as f64;
    RgbImage::from_fn(size, size, |x, y| {
        let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
        let face = ((fx - cx) / (0.3 * s)).powi(2) + ((fy - cy) / (0.4 * s)).powi(2) < 1.0;
        let eye = |ex: f64| ((fx - ex).powi(2) + (fy - (cy - 0.1 * s)).powi(2)).sqrt() < 0.05 * s;
        let mouth = (fy - (cy + 0.18 * s)).abs() < 0.025 * s && (fx - cx).abs() < 0.12 * s;
        if eye(cx - 0.12 * s) || eye(cx + 0.12 * s) || mouth {
            Rgb([30, 20, 20])
        } else if face {
            Rgb([(200.0 - tint) as u8, (150.0 + tint / 2.0) as u8, 120])
        } else {
            let g = (60.0 + 100.0 * fy / s) as u8;
            Rgb([g, g, (g as f64 * 0.8) as u8])
        }
    })
}

fn side_of(code: &str) -> (Side, f64) {
    match code {
        "fa" | "fb" => (Side::Frontal, 0.0),
        "hl" => (Side::Left, 67.5),
        "hr" => (Side::Right, 67.5),
        "ql" => (Side::Left, 22.5),
        "qr" => (Side::Right, 22.5),
        "pl" => (Side::Left, 90.0),
        "pr" => (Side::Right, 90.0),
        other => panic!("no fixture pose for `{other}`"),
    }
}

/// Writes `subject_session_pose.png` files under `root/` for each entry.
pub fn write_corpus(root: &Path, entries: &[(&str, &str, &str)], size: u32) {
    std::fs::create_dir_all(root).unwrap();
    for (subject, session, pose) in entries {
        let (side, angle) = side_of(pose);
        let img = synthetic_face(size, subject.parse().unwrap(), side, angle);
        img.save(root.join(format!("{subject}_{session}_{pose}.png")))
            .unwrap();
    }
}

/// Six faces over two subjects: subject 1 has a frontal with both 67.5
/// degree sides; subject 2 has a frontal, one 67.5 degree left and a 90
/// degree right that the angle filter drops. That gives 5 records, 3 pairs
/// and 1 triplet.
pub const SIX_FACES: [(&str, &str, &str); 6] = [
    ("00001", "940128", "fa"),
    ("00001", "940128", "hl"),
    ("00001", "940128", "hr"),
    ("00002", "940128", "fa"),
    ("00002", "940128", "hl"),
    ("00002", "940128", "pr"),
];

/// `subjects` complete triplets (fa, hl, hr), one session each.
pub fn triplet_entries(subjects: usize) -> Vec<(String, String, String)> {
    (1..=subjects)
        .flat_map(|s| {
            ["fa", "hl", "hr"].map(|p| (format!("{s:05}"), "940128".to_string(), p.to_string()))
        })
        .collect()
}

/// Prepares a dataset of `subjects` triplets at `size` pixels, all in the
/// training split.
pub fn prepared_triplets(dir: &Path, subjects: usize, size: u32) -> data::DatasetManifest {
    let owned = triplet_entries(subjects);
    let entries: Vec<(&str, &str, &str)> = owned
        .iter()
        .map(|(a, b, c)| (a.as_str(), b.as_str(), c.as_str()))
        .collect();
    let raw = dir.join("raw");
    write_corpus(&raw, &entries, size);
    let opts = ManifestOptions {
        split_ratio: 1.0,
        image_size: size,
        ..ManifestOptions::default()
    };
    data::prepare_dataset(&raw, &dir.join("data"), &opts, &NoDetector)
        .unwrap()
        .0
}

/// Small pairwise config that trains quickly on 16x16 inputs.
pub fn tiny_train_config() -> TrainConfig {
    TrainConfig {
        mode: TrainMode::Pairwise,
        epochs: 1,
        checkpoint_every: 1,
        generator: UNetConfig {
            base_width: 4,
            ..UNetConfig::tiny(4)
        },
        discriminator: PatchDiscConfig {
            layer_widths: vec![4, 8],
            strided_layers: 1,
            target_rf: None,
            ..PatchDiscConfig::default()
        },
        ..TrainConfig::default()
    }
}
