//! Dataset ingestion, stratified splitting and face-cut preprocessing.
//!
//! A dataset on disk is class-per-directory: the root holds exactly the two
//! class directories `with_mask/` and `without_mask/`. Manifests are CSV
//! files with the fixed header
//! `path,label,split,face_found,landmark_source,source_path`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::facecut::{cut_face, CutOptions, FaceCutOutcome};
use crate::landmarks::{FaceImage, LandmarkProvider};

pub const MANIFEST_HEADER: [&str; 6] = [
    "path",
    "label",
    "split",
    "face_found",
    "landmark_source",
    "source_path",
];

/// The two classes of the task, named after their directories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    WithMask,
    WithoutMask,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::WithMask, Label::WithoutMask];

    pub fn dir_name(&self) -> &'static str {
        match self {
            Label::WithMask => "with_mask",
            Label::WithoutMask => "without_mask",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "with_mask" => Ok(Label::WithMask),
            "without_mask" => Ok(Label::WithoutMask),
            other => Err(Error::Label(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Option<Self>> {
        match s {
            "" => Ok(None),
            "train" => Ok(Some(Split::Train)),
            "val" => Ok(Some(Split::Val)),
            "test" => Ok(Some(Split::Test)),
            other => Err(Error::Input(format!("unknown split `{other}`"))),
        }
    }
}

/// Provenance of the landmarks used to cut a sample. `None` covers both raw
/// scans and no-face records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordSource {
    Predictor,
    Sidecar,
    None,
}

impl RecordSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            RecordSource::Predictor => "predictor",
            RecordSource::Sidecar => "sidecar",
            RecordSource::None => "none",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "predictor" => Ok(RecordSource::Predictor),
            "sidecar" => Ok(RecordSource::Sidecar),
            "none" => Ok(RecordSource::None),
            other => Err(Error::Input(format!("unknown landmark source `{other}`"))),
        }
    }
}

/// One dataset sample. `path` is empty for skip-policy records that have no
/// derived file.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub path: PathBuf,
    pub label: Label,
    pub split: Option<Split>,
    pub face_found: bool,
    pub landmark_source: RecordSource,
    pub source_path: PathBuf,
}

impl SampleRecord {
    pub fn has_file(&self) -> bool {
        !self.path.as_os_str().is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetManifest {
    pub records: Vec<SampleRecord>,
    pub seed: Option<u64>,
    pub ratios: Option<(f64, f64, f64)>,
}

impl DatasetManifest {
    /// Per-label totals, keyed by directory name.
    pub fn class_counts(&self) -> BTreeMap<&'static str, usize> {
        let mut counts: BTreeMap<&'static str, usize> = BTreeMap::new();
        for label in Label::ALL {
            counts.insert(label.dir_name(), 0);
        }
        for rec in &self.records {
            *counts.get_mut(rec.label.dir_name()).expect("all labels present") += 1;
        }
        counts
    }

    pub fn records_in(&self, split: Split) -> impl Iterator<Item = &SampleRecord> {
        self.records.iter().filter(move |r| r.split == Some(split))
    }
}

/// Walk the class directories under `root` and manifest every decodable
/// image. Unreadable files are excluded with a warning.
pub fn scan_dataset(root: &Path) -> Result<DatasetManifest> {
    for label in Label::ALL {
        if !root.join(label.dir_name()).is_dir() {
            return Err(Error::Layout(format!(
                "missing class directory `{}` under {}",
                label.dir_name(),
                root.display()
            )));
        }
    }
    let mut records = Vec::new();
    for label in Label::ALL {
        let dir = root.join(label.dir_name());
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && is_image_path(p))
            .collect();
        paths.sort();
        for path in paths {
            match crate::imgproc::load_rgb(&path) {
                Ok(_) => records.push(SampleRecord {
                    path: path.clone(),
                    label,
                    split: None,
                    face_found: true,
                    landmark_source: RecordSource::None,
                    source_path: path,
                }),
                Err(e) => log::warn!("excluding unreadable image: {e}"),
            }
        }
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset(root.to_path_buf()));
    }
    Ok(DatasetManifest {
        records,
        seed: None,
        ratios: None,
    })
}

fn is_image_path(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
        Some("png" | "jpg" | "jpeg" | "bmp")
    )
}

/// Assign train/val/test splits, stratified per class.
///
/// Records with a file are sorted by `source_path` per class, shuffled with a
/// ChaCha stream seeded by `seed`, and sliced by floor-assigned counts with
/// the remainder going to train. Records without a file keep an empty split.
pub fn split_dataset(
    manifest: &DatasetManifest,
    seed: u64,
    ratios: (f64, f64, f64),
) -> Result<DatasetManifest> {
    validate_ratios(ratios)?;
    let mut out = manifest.clone();
    for rec in &mut out.records {
        rec.split = None;
    }
    for label in Label::ALL {
        // Indices into out.records for this class, ordered by source path so
        // on-disk shuffling cannot change the assignment.
        let mut idx: Vec<usize> = out
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.label == label && r.has_file())
            .map(|(i, _)| i)
            .collect();
        idx.sort_by(|&a, &b| out.records[a].source_path.cmp(&out.records[b].source_path));

        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ label_salt(label));
        idx.shuffle(&mut rng);

        let n = idx.len();
        let n_val = (n as f64 * ratios.1).floor() as usize;
        let n_test = (n as f64 * ratios.2).floor() as usize;
        let n_train = n - n_val - n_test; // floor(train) plus the remainder
        for (k, &i) in idx.iter().enumerate() {
            out.records[i].split = Some(if k < n_train {
                Split::Train
            } else if k < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            });
        }
    }
    out.seed = Some(seed);
    out.ratios = Some(ratios);
    Ok(out)
}

fn label_salt(label: Label) -> u64 {
    match label {
        Label::WithMask => 0x5741534b, // distinct stream per class
        Label::WithoutMask => 0x4e4f4d4b,
    }
}

pub fn validate_ratios(ratios: (f64, f64, f64)) -> Result<()> {
    let (a, b, c) = ratios;
    if a < 0.0 || b < 0.0 || c < 0.0 {
        return Err(Error::Ratio(format!("negative ratio in ({a}, {b}, {c})")));
    }
    if ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(Error::Ratio(format!("ratios ({a}, {b}, {c}) do not sum to 1")));
    }
    Ok(())
}

/// Run the face cut over every record, writing derived images under a
/// mirrored class tree rooted at `out_dir`, and return the derived manifest.
///
/// Records are processed in parallel; the manifest is assembled afterwards
/// in record order.
pub fn preprocess_dataset(
    manifest: &DatasetManifest,
    provider: &dyn LandmarkProvider,
    options: &CutOptions,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    for label in Label::ALL {
        let dir = out_dir.join(label.dir_name());
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }

    let results: Vec<Result<Vec<SampleRecord>>> = manifest
        .records
        .par_iter()
        .map(|rec| preprocess_record(rec, provider, options, out_dir))
        .collect();

    let mut records = Vec::with_capacity(manifest.records.len());
    for res in results {
        records.extend(res?);
    }
    Ok(DatasetManifest {
        records,
        seed: None,
        ratios: None,
    })
}

fn preprocess_record(
    rec: &SampleRecord,
    provider: &dyn LandmarkProvider,
    options: &CutOptions,
    out_dir: &Path,
) -> Result<Vec<SampleRecord>> {
    let image = FaceImage::from_file(&rec.path)?;
    let stem = rec
        .path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sample".into());
    let class_dir = out_dir.join(rec.label.dir_name());

    match cut_face(&image, provider, options)? {
        FaceCutOutcome::NoFaceSkipped => Ok(vec![SampleRecord {
            path: PathBuf::new(),
            label: rec.label,
            split: None,
            face_found: false,
            landmark_source: RecordSource::None,
            source_path: rec.path.clone(),
        }]),
        FaceCutOutcome::NoFacePassthrough(_) => {
            let ext = rec
                .path
                .extension()
                .map(|e| e.to_string_lossy().into_owned())
                .unwrap_or_else(|| "png".into());
            let dest = class_dir.join(format!("{stem}.{ext}"));
            std::fs::copy(&rec.path, &dest).map_err(|e| Error::io(&dest, e))?;
            Ok(vec![SampleRecord {
                path: dest,
                label: rec.label,
                split: None,
                face_found: false,
                landmark_source: RecordSource::None,
                source_path: rec.path.clone(),
            }])
        }
        FaceCutOutcome::Faces(cuts) => {
            let source = match provider.source() {
                crate::landmarks::LandmarkSource::Predictor => RecordSource::Predictor,
                crate::landmarks::LandmarkSource::Sidecar => RecordSource::Sidecar,
            };
            let multi = cuts.len() > 1;
            let mut out = Vec::with_capacity(cuts.len());
            for (i, cut) in cuts.iter().enumerate() {
                let name = if multi {
                    format!("{stem}_f{i}.png")
                } else {
                    format!("{stem}.png")
                };
                let dest = class_dir.join(name);
                cut.pixels.save(&dest).map_err(|e| Error::Data(format!(
                    "cannot write {}: {e}",
                    dest.display()
                )))?;
                out.push(SampleRecord {
                    path: dest,
                    label: rec.label,
                    split: None,
                    face_found: true,
                    landmark_source: source,
                    source_path: rec.path.clone(),
                });
            }
            Ok(out)
        }
    }
}

/// Write a manifest CSV with the fixed header.
pub fn write_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Data(e.to_string()))?;
    writer
        .write_record(MANIFEST_HEADER)
        .map_err(|e| Error::Data(e.to_string()))?;
    for rec in &manifest.records {
        writer
            .write_record([
                rec.path.to_string_lossy().as_ref(),
                rec.label.dir_name(),
                rec.split.map(|s| s.as_str()).unwrap_or(""),
                if rec.face_found { "true" } else { "false" },
                rec.landmark_source.as_str(),
                rec.source_path.to_string_lossy().as_ref(),
            ])
            .map_err(|e| Error::Data(e.to_string()))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Read a manifest CSV written by [`write_manifest`].
pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
    {
        let headers = reader.headers().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let expected: Vec<&str> = MANIFEST_HEADER.to_vec();
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                reason: format!("unexpected header `{}`", headers.iter().collect::<Vec<_>>().join(",")),
            });
        }
    }
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        if row.len() != MANIFEST_HEADER.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                reason: format!("row has {} fields", row.len()),
            });
        }
        records.push(SampleRecord {
            path: PathBuf::from(&row[0]),
            label: Label::parse(&row[1])?,
            split: Split::parse(&row[2])?,
            face_found: &row[3] == "true",
            landmark_source: RecordSource::parse(&row[4])?,
            source_path: PathBuf::from(&row[5]),
        });
    }
    Ok(DatasetManifest {
        records,
        seed: None,
        ratios: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{Rgb, RgbImage};
    use tempfile::TempDir;

    fn write_images(dir: &Path, label: Label, n: usize) {
        let class = dir.join(label.dir_name());
        std::fs::create_dir_all(&class).unwrap();
        for i in 0..n {
            RgbImage::from_pixel(8, 8, Rgb([i as u8, 0, 0]))
                .save(class.join(format!("img_{i:03}.png")))
                .unwrap();
        }
    }

    fn synthetic_manifest(n_per_class: usize) -> DatasetManifest {
        let mut records = Vec::new();
        for label in Label::ALL {
            for i in 0..n_per_class {
                let p = PathBuf::from(format!("/data/{}/img_{i:04}.png", label.dir_name()));
                records.push(SampleRecord {
                    path: p.clone(),
                    label,
                    split: None,
                    face_found: true,
                    landmark_source: RecordSource::None,
                    source_path: p,
                });
            }
        }
        DatasetManifest { records, seed: None, ratios: None }
    }

    #[test]
    fn scan_counts_per_class() {
        let dir = TempDir::new().unwrap();
        write_images(dir.path(), Label::WithMask, 3);
        write_images(dir.path(), Label::WithoutMask, 2);
        let manifest = scan_dataset(dir.path()).unwrap();
        let counts = manifest.class_counts();
        assert_eq!(counts["with_mask"], 3);
        assert_eq!(counts["without_mask"], 2);
    }

    #[test]
    fn scan_requires_both_class_directories() {
        let dir = TempDir::new().unwrap();
        write_images(dir.path(), Label::WithMask, 1);
        let err = scan_dataset(dir.path()).unwrap_err();
        assert!(matches!(err, Error::Layout(_)));
    }

    #[test]
    fn scan_rejects_empty_dataset() {
        let dir = TempDir::new().unwrap();
        std::fs::create_dir_all(dir.path().join("with_mask")).unwrap();
        std::fs::create_dir_all(dir.path().join("without_mask")).unwrap();
        let err = scan_dataset(dir.path()).unwrap_err();
        assert!(matches!(err, Error::EmptyDataset(_)));
    }

    #[test]
    fn scan_excludes_truncated_image() {
        let dir = TempDir::new().unwrap();
        write_images(dir.path(), Label::WithMask, 2);
        write_images(dir.path(), Label::WithoutMask, 2);
        // A png header with no body decodes to an error.
        std::fs::write(
            dir.path().join("with_mask/broken.png"),
            [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a, 0, 0],
        )
        .unwrap();
        let manifest = scan_dataset(dir.path()).unwrap();
        assert_eq!(manifest.class_counts()["with_mask"], 2);
    }

    #[test]
    fn ten_samples_split_six_two_two() {
        let manifest = synthetic_manifest(10);
        let split = split_dataset(&manifest, 42, (0.6, 0.2, 0.2)).unwrap();
        for label in Label::ALL {
            let count = |s| {
                split
                    .records
                    .iter()
                    .filter(|r| r.label == label && r.split == Some(s))
                    .count()
            };
            assert_eq!((count(Split::Train), count(Split::Val), count(Split::Test)), (6, 2, 2));
        }
    }

    #[test]
    fn seven_samples_split_five_one_one() {
        // floor(7*0.2) = 1 for val and test; remainder 5 - 4 = 1 extra to train.
        let mut manifest = synthetic_manifest(7);
        manifest.records.retain(|r| r.label == Label::WithMask);
        let split = split_dataset(&manifest, 7, (0.6, 0.2, 0.2)).unwrap();
        let count = |s| split.records.iter().filter(|r| r.split == Some(s)).count();
        assert_eq!((count(Split::Train), count(Split::Val), count(Split::Test)), (5, 1, 1));
    }

    #[test]
    fn same_seed_same_assignment() {
        let manifest = synthetic_manifest(25);
        let a = split_dataset(&manifest, 99, (0.6, 0.2, 0.2)).unwrap();
        let b = split_dataset(&manifest, 99, (0.6, 0.2, 0.2)).unwrap();
        assert_eq!(a, b);
        let c = split_dataset(&manifest, 100, (0.6, 0.2, 0.2)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn disk_order_shuffle_does_not_change_assignment() {
        let manifest = synthetic_manifest(25);
        let mut reversed = manifest.clone();
        reversed.records.reverse();
        let a = split_dataset(&manifest, 5, (0.6, 0.2, 0.2)).unwrap();
        let b = split_dataset(&reversed, 5, (0.6, 0.2, 0.2)).unwrap();
        for rec in &a.records {
            let other = b
                .records
                .iter()
                .find(|r| r.source_path == rec.source_path)
                .unwrap();
            assert_eq!(rec.split, other.split, "{}", rec.source_path.display());
        }
    }

    #[test]
    fn bad_ratios_are_rejected() {
        let manifest = synthetic_manifest(4);
        assert!(matches!(
            split_dataset(&manifest, 1, (0.5, 0.2, 0.2)).unwrap_err(),
            Error::Ratio(_)
        ));
        assert!(matches!(
            split_dataset(&manifest, 1, (1.2, -0.1, -0.1)).unwrap_err(),
            Error::Ratio(_)
        ));
    }

    #[test]
    fn every_filed_record_lands_in_exactly_one_split() {
        let manifest = synthetic_manifest(13);
        let split = split_dataset(&manifest, 3, (0.6, 0.2, 0.2)).unwrap();
        assert!(split.records.iter().all(|r| r.split.is_some()));
        assert_eq!(split.records.len(), manifest.records.len());
    }

    #[test]
    fn manifest_roundtrips_through_csv() {
        let dir = TempDir::new().unwrap();
        let mut manifest = synthetic_manifest(3);
        manifest.records[0].face_found = false;
        manifest.records[0].path = PathBuf::new();
        let split = split_dataset(&manifest, 11, (0.6, 0.2, 0.2)).unwrap();
        let path = dir.path().join("manifest.csv");
        write_manifest(&split, &path).unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("path,label,split,face_found,landmark_source,source_path\n"));

        let back = read_manifest(&path).unwrap();
        assert_eq!(back.records, split.records);
    }
}
