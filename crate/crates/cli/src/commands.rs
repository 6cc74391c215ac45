use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use frontalize::data::{
    self, BoxTableDetector, FaceDetector, ManifestOptions, NoDetector, PoseMap, Side, MANIFEST_FILE,
};
use frontalize::losses::named_preset;
use frontalize::metrics::{
    similarity_report, FeatureExtractor, LocalEmbeddingSimilarity, RandomProjection,
    RemoteSimilarity, SimilarityProvider,
};
use frontalize::nn::{Checkpoint, Mode, UNetGenerator};
use frontalize::train::{latest_checkpoint, DiskImages, TrainConfig, Trainer};
use frontalize::util::write_atomic;
use frontalize::{Error, ImageTensor};
use image::RgbImage;

use crate::{grid, EvaluateArgs, GenerateArgs, GeneratorChoice, GridArgs, PrepareArgs, TrainArgs};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Checkpoint(String),
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Checkpoint(_) => 4,
            CliError::Other(_) => 1,
        }
    }

    fn checkpoint(e: Error) -> Self {
        CliError::Checkpoint(e.to_string())
    }

    fn usage(e: Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (CliError::Usage(m) | CliError::Data(m) | CliError::Checkpoint(m) | CliError::Other(m)) =
            self;
        f.write_str(m)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::InvalidConfig(_) | Error::SharingDisabled => CliError::Usage(msg),
            Error::Checkpoint(_) | Error::SharingViolated { .. } => CliError::Checkpoint(msg),
            Error::NonFiniteLoss { .. } | Error::Tensor(_) => CliError::Other(msg),
            _ => CliError::Data(msg),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn read_flag_file(path: &Path, flag: &str) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| usage(format!("{flag} {}: {e}", path.display())))
}

fn require_dir(path: &Path, flag: &str) -> CliResult {
    if path.is_dir() {
        Ok(())
    } else {
        Err(usage(format!(
            "{flag} {} is not a directory",
            path.display()
        )))
    }
}

const IMAGE_EXTENSIONS: [&str; 6] = ["png", "jpg", "jpeg", "ppm", "pgm", "pnm"];

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Image files directly inside `dir`, sorted by name.
fn list_images(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries =
        fs::read_dir(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .flatten()
        .map(|e| e.path())
        .filter(|p| p.is_file() && is_image(p))
        .collect();
    files.sort();
    Ok(files)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub fn prepare_data(a: PrepareArgs) -> CliResult {
    let mut opts = ManifestOptions {
        min_angle: a.min_angle,
        max_angle: a.max_angle,
        split_ratio: a.split,
        seed: a.seed,
        image_size: a.size,
        ..ManifestOptions::default()
    };
    if let Some(p) = &a.pose_map {
        opts.pose_map =
            PoseMap::parse(&read_flag_file(p, "--pose-map")?).map_err(CliError::usage)?;
    }
    if let Some(p) = a.pattern {
        opts.filename_pattern = p;
    }
    opts.validate().map_err(CliError::usage)?;
    let detector: Box<dyn FaceDetector> = match &a.boxes {
        Some(p) => Box::new(
            BoxTableDetector::parse(&read_flag_file(p, "--boxes")?).map_err(CliError::usage)?,
        ),
        None => Box::new(NoDetector),
    };
    require_dir(&a.root, "--root")?;

    let (manifest, report) = data::prepare_dataset(&a.root, &a.out, &opts, detector.as_ref())?;
    print!("{}", manifest.summary());
    println!(
        "wrote {} crops ({} center-crop fallbacks) and {}",
        report.images,
        report.fallback_crops,
        report.manifest_path.display()
    );
    Ok(())
}

fn build_train_config(a: &TrainArgs) -> CliResult<TrainConfig> {
    let mut cfg = match &a.config {
        Some(p) => {
            TrainConfig::from_toml(&read_flag_file(p, "--config")?).map_err(CliError::usage)?
        }
        None => TrainConfig::named_schedule(&a.schedule)
            .ok_or_else(|| usage(format!("unknown schedule `{}`", a.schedule)))?,
    };
    if let Some(name) = &a.preset {
        let p = named_preset(name).ok_or_else(|| usage(format!("unknown loss preset `{name}`")))?;
        cfg.mode = p.mode;
        cfg.preset = Some(name.clone());
        cfg.weights = None;
        cfg.weights_end = None;
    }
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.lr {
        cfg.lr = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.checkpoint_every {
        cfg.checkpoint_every = v;
    }
    if a.max_steps.is_some() {
        cfg.max_steps = a.max_steps;
    }
    if a.overfit.is_some() {
        cfg.overfit_samples = a.overfit;
    }
    cfg.validate().map_err(CliError::usage)?;
    Ok(cfg)
}

fn resume_config(a: &TrainArgs, dir: &Path) -> CliResult<TrainConfig> {
    let fixed = [
        ("--config", a.config.is_some()),
        ("--preset", a.preset.is_some()),
        ("--batch-size", a.batch_size.is_some()),
        ("--lr", a.lr.is_some()),
        ("--seed", a.seed.is_some()),
        ("--overfit", a.overfit.is_some()),
    ];
    if let Some((flag, _)) = fixed.iter().find(|(_, set)| *set) {
        return Err(usage(format!(
            "{flag} cannot change when resuming; the checkpointed config is used"
        )));
    }
    let mut cfg = Trainer::stored_config(dir).map_err(CliError::checkpoint)?;
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.checkpoint_every {
        cfg.checkpoint_every = v;
    }
    if a.max_steps.is_some() {
        cfg.max_steps = a.max_steps;
    }
    cfg.validate().map_err(CliError::usage)?;
    Ok(cfg)
}

pub fn train(a: TrainArgs) -> CliResult {
    let resume_dir = match (&a.resume_from, a.resume) {
        (Some(d), _) => Some(d.clone()),
        (None, true) => Some(latest_checkpoint(&a.out).ok_or_else(|| {
            CliError::Checkpoint(format!("no checkpoint under {}", a.out.display()))
        })?),
        (None, false) => None,
    };
    let cfg = match &resume_dir {
        Some(d) => resume_config(&a, d)?,
        None => build_train_config(&a)?,
    };
    require_dir(&a.data, "--data")?;
    let manifest = data::load_manifest(&a.data.join(MANIFEST_FILE))?;

    let mut trainer = match &resume_dir {
        Some(d) => {
            let t = Trainer::resume(d, Some(cfg.clone())).map_err(CliError::checkpoint)?;
            log::info!(
                "resuming from {} at epoch {}",
                d.display(),
                t.state().epoch + 1
            );
            t
        }
        None => Trainer::new(cfg.clone())?,
    };
    fs::create_dir_all(&a.out).map_err(|e| CliError::Data(format!("{}: {e}", a.out.display())))?;
    write_atomic(&a.out.join("train_config.toml"), cfg.to_toml().as_bytes())?;
    let images = DiskImages::new(&a.data, &manifest);
    let outcome = trainer.train(&manifest, &images, &a.out)?;
    println!(
        "trained {} epochs, {} steps",
        outcome.epochs_completed, outcome.steps
    );
    if let Some(c) = outcome.last_checkpoint {
        println!("last checkpoint: {}", c.display());
    }
    Ok(())
}

fn load_generator(path: &Path) -> CliResult<UNetGenerator> {
    let ck = Checkpoint::load(path).map_err(CliError::checkpoint)?;
    UNetGenerator::from_checkpoint(&ck).map_err(CliError::checkpoint)
}

/// Pose side of every manifest record, keyed by record id and by source file stem.
fn sides_from_manifest(path: &Path) -> CliResult<HashMap<String, Side>> {
    let manifest = data::load_manifest(path)?;
    let mut sides = HashMap::new();
    for r in &manifest.records {
        sides.insert(r.id(), r.pose.side);
        sides.insert(stem(Path::new(&r.source_path)), r.pose.side);
    }
    Ok(sides)
}

fn expand_inputs(inputs: &[PathBuf]) -> CliResult<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            files.extend(list_images(p)?);
        } else if p.is_file() {
            files.push(p.clone());
        } else {
            return Err(usage(format!("--input {} does not exist", p.display())));
        }
    }
    if files.is_empty() {
        return Err(usage("--input matched no images"));
    }
    Ok(files)
}

pub fn generate(a: GenerateArgs) -> CliResult {
    if !a.checkpoint.is_dir() {
        return Err(CliError::Checkpoint(format!(
            "checkpoint directory {} not found",
            a.checkpoint.display()
        )));
    }
    if a.size == 0 {
        return Err(usage("--size must be positive"));
    }
    let files = expand_inputs(&a.input)?;
    if a.generator == GeneratorChoice::Auto && a.manifest.is_none() {
        log::warn!(
            "--generator auto without --manifest: pose sides are unknown, using the left generator"
        );
    }
    let sides = match &a.manifest {
        Some(m) => sides_from_manifest(m)?,
        None => HashMap::new(),
    };

    let g1 = load_generator(&a.checkpoint.join("g1.bin"))?;
    let g2_path = a.checkpoint.join("g2.bin");
    let g2 = if g2_path.is_file() {
        Some(load_generator(&g2_path)?)
    } else {
        None
    };
    let size = a.size as usize;
    g1.config()
        .check_input(&[1, g1.config().in_channels, size, size])
        .map_err(|e| CliError::Checkpoint(format!("generator cannot take {size}px inputs: {e}")))?;
    if a.generator == GeneratorChoice::Right && g2.is_none() {
        return Err(CliError::Checkpoint(
            "checkpoint has no right generator (g2.bin)".into(),
        ));
    }

    fs::create_dir_all(&a.out).map_err(|e| CliError::Data(format!("{}: {e}", a.out.display())))?;
    let started = Instant::now();
    for file in &files {
        let name = stem(file);
        let side = sides.get(&name).copied();
        let use_right = match a.generator {
            GeneratorChoice::Left => {
                if side == Some(Side::Right) {
                    log::warn!("{name}: right-pose input sent to the left generator");
                }
                false
            }
            GeneratorChoice::Right => {
                if side == Some(Side::Left) {
                    log::warn!("{name}: left-pose input sent to the right generator");
                }
                true
            }
            GeneratorChoice::Auto => match side {
                Some(Side::Right) if g2.is_some() => true,
                Some(Side::Right) => {
                    log::warn!("{name}: right-pose input but the checkpoint has one generator");
                    false
                }
                Some(Side::Frontal) => {
                    log::warn!("{name}: input is already frontal");
                    false
                }
                _ => false,
            },
        };
        let g = if use_right {
            g2.as_ref().expect("checked above")
        } else {
            &g1
        };
        let x = ImageTensor::load(file, Some(a.size))?;
        let y = g.forward(x.tensor(), &mut Mode::Eval)?;
        ImageTensor::new(y)?.save_png(&a.out.join(format!("{name}.png")))?;
    }
    let secs = started.elapsed().as_secs_f64();
    log::info!(
        "generated {} images in {secs:.2}s ({:.2} images/s)",
        files.len(),
        files.len() as f64 / secs.max(1e-9)
    );
    println!("wrote {} images to {}", files.len(), a.out.display());
    Ok(())
}

fn extractor(spec: &str) -> CliResult<Box<dyn FeatureExtractor>> {
    match spec.split_once(':') {
        None if spec == "stub" => Ok(Box::new(RandomProjection::stub())),
        Some(("pretrained", path)) if !path.is_empty() => Ok(Box::new(
            RandomProjection::load(Path::new(path)).map_err(CliError::checkpoint)?,
        )),
        _ => Err(usage(format!(
            "--fid-extractor must be `stub` or `pretrained:<path>`, got `{spec}`"
        ))),
    }
}

pub fn evaluate(a: EvaluateArgs) -> CliResult {
    require_dir(&a.generated, "--generated")?;
    require_dir(&a.reference, "--reference")?;
    if a.limit == Some(0) || a.parallelism == 0 || a.size == 0 {
        return Err(usage("--limit, --parallelism and --size must be positive"));
    }
    let fx = extractor(&a.fid_extractor)?;
    let provider: Box<dyn SimilarityProvider> = match a.provider.as_str() {
        "remote" => Box::new(RemoteSimilarity::from_env(a.rate).map_err(CliError::usage)?),
        _ => Box::new(LocalEmbeddingSimilarity::default()),
    };

    let references: HashMap<String, PathBuf> = list_images(&a.reference)?
        .into_iter()
        .map(|p| (stem(&p), p))
        .collect();
    let mut matched = Vec::new();
    for g in list_images(&a.generated)? {
        match references.get(&stem(&g)) {
            Some(r) => matched.push((g, r.clone())),
            None => log::warn!("{}: no reference image with the same name", g.display()),
        }
    }
    if let Some(n) = a.limit {
        matched.truncate(n);
    }
    if matched.is_empty() {
        return Err(CliError::Data(
            "no generated image has a matching reference".into(),
        ));
    }
    let pairs = matched
        .iter()
        .map(|(g, r)| {
            Ok((
                ImageTensor::load(g, Some(a.size))?,
                ImageTensor::load(r, Some(a.size))?,
            ))
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let report = similarity_report(&pairs, provider.as_ref(), fx.as_ref(), a.parallelism)?;
    print!("{}", report.to_table());
    write_atomic(&a.report, report.to_jsonl().as_bytes())?;
    println!("report: {}", a.report.display());
    Ok(())
}

pub fn grid(a: GridArgs) -> CliResult {
    if a.cell == 0 {
        return Err(usage("--cell must be positive"));
    }
    let mut labels = Vec::new();
    let mut dirs = Vec::new();
    for spec in &a.columns {
        let (label, dir) = spec
            .split_once('=')
            .ok_or_else(|| usage(format!("--column expects LABEL=DIR, got `{spec}`")))?;
        let dir = PathBuf::from(dir);
        require_dir(&dir, "--column")?;
        labels.push(label.to_string());
        dirs.push(dir);
    }
    let mut lists = dirs
        .iter()
        .map(|d| list_images(d))
        .collect::<CliResult<Vec<_>>>()?;
    if let Some(n) = a.limit {
        lists.iter_mut().for_each(|l| l.truncate(n));
    }
    let rows = lists[0].len();
    if rows == 0 {
        return Err(usage(format!("column `{}` has no images", labels[0])));
    }
    if let Some((i, l)) = lists.iter().enumerate().find(|(_, l)| l.len() != rows) {
        return Err(usage(format!(
            "column `{}` has {} images, column `{}` has {rows}",
            labels[i],
            l.len(),
            labels[0]
        )));
    }
    let columns = lists
        .iter()
        .map(|files| {
            files
                .iter()
                .map(|f| ImageTensor::load(f, None)?.to_rgb())
                .collect::<Result<Vec<RgbImage>, Error>>()
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let canvas = grid::compose(&labels, &columns, a.cell);
    let mut png = Vec::new();
    canvas
        .write_to(&mut std::io::Cursor::new(&mut png), image::ImageFormat::Png)
        .map_err(|e| CliError::Other(format!("png encode: {e}")))?;
    write_atomic(&a.out, &png)?;
    println!(
        "wrote {}x{} grid ({rows} rows, {} columns) to {}",
        canvas.width(),
        canvas.height(),
        labels.len(),
        a.out.display()
    );
    Ok(())
}
