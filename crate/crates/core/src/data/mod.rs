//! Corpus ingestion: pose parsing, filtering, cropping and manifests.

pub mod crop;
pub mod manifest;
pub mod pose;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use crop::{crop_face, BoxTableDetector, CropBox, Detection, FaceDetector, NoDetector};
pub use manifest::{
    build_manifest, filter_by_angle, parse_file_name, DatasetManifest, FaceRecord, ManifestOptions,
    NameMatch, PairedSample, Split, TripletSample,
};
pub use pose::{parse_pose_code, PoseLabel, PoseMap, Side};

use crate::error::{Error, Result};
use crate::util::write_atomic;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const IMAGES_DIR: &str = "images";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrepareReport {
    pub manifest_path: PathBuf,
    pub images: usize,
    pub fallback_crops: usize,
}

/// Crops every manifest record into `out/images/` and writes `out/manifest.jsonl`
/// with the crop boxes filled in. Decoding and cropping run on the rayon pool.
pub fn prepare_dataset(
    root: &Path,
    out: &Path,
    opts: &ManifestOptions,
    detector: &dyn FaceDetector,
) -> Result<(DatasetManifest, PrepareReport)> {
    let mut manifest = build_manifest(root, opts)?;
    let images_dir = out.join(IMAGES_DIR);
    fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;

    let crops: Vec<(CropBox, bool)> = manifest
        .records
        .par_iter()
        .map(|r| {
            let src = root.join(&r.source_path);
            let bytes = fs::read(&src).map_err(|e| Error::io(&src, e))?;
            let crop = crop::crop_encoded(&bytes, &r.source_path, detector, opts.image_size)?;
            let dst = images_dir.join(r.image_file());
            let mut png = Vec::new();
            crop.tensor
                .to_rgb()?
                .write_to(&mut std::io::Cursor::new(&mut png), image::ImageFormat::Png)
                .map_err(|e| Error::io(&dst, std::io::Error::other(e)))?;
            write_atomic(&dst, &png)?;
            Ok((crop.crop_box, crop.fallback))
        })
        .collect::<Result<_>>()?;

    let mut fallback_crops = 0;
    for (record, (bbox, fallback)) in manifest.records.iter_mut().zip(crops) {
        record.crop_box = Some(bbox);
        record.fallback_crop = fallback;
        fallback_crops += usize::from(fallback);
    }
    let manifest_path = out.join(MANIFEST_FILE);
    write_atomic(&manifest_path, manifest.to_jsonl().as_bytes())?;
    let report = PrepareReport {
        manifest_path,
        images: manifest.records.len(),
        fallback_crops,
    };
    Ok((manifest, report))
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    DatasetManifest::from_jsonl(&text)
}
