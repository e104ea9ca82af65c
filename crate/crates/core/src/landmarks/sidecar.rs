//! Deterministic landmark provider backed by per-image annotation files.
//!
//! A sidecar file lives next to its image as `<image-stem>.landmarks.txt` and
//! holds one or more face entries. Each entry is a header line
//!
//! ```text
//! facebox <left> <top> <right> <bottom>
//! ```
//!
//! followed by exactly 68 point lines `"<index> <x> <y>"` with indices
//! 0..=67 in order. Values are plain decimal floats; repeated reads yield
//! bit-identical landmark sets.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::landmarks::{
    sort_boxes, FaceBox, FaceImage, LandmarkProvider, LandmarkSet, LandmarkSource, Point2D,
    NUM_LANDMARKS,
};

pub const SIDECAR_SUFFIX: &str = "landmarks.txt";

/// Path of the sidecar belonging to `image_path`.
pub fn sidecar_path(image_path: &Path) -> PathBuf {
    let stem = image_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    image_path.with_file_name(format!("{stem}.{SIDECAR_SUFFIX}"))
}

/// One annotated face: its box and its 68 points.
#[derive(Debug, Clone, PartialEq)]
pub struct SidecarEntry {
    pub face: FaceBox,
    pub points: Vec<Point2D>,
}

/// Parse every face entry in a sidecar file.
pub fn read_sidecar(path: &Path) -> Result<Vec<SidecarEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let fmt = |reason: String| Error::AnnotationFormat {
        path: path.to_path_buf(),
        reason,
    };

    let mut entries = Vec::new();
    let mut current: Option<(FaceBox, Vec<Point2D>)> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields[0] == "facebox" {
            if let Some((face, points)) = current.take() {
                entries.push(finish_entry(face, points, path)?);
            }
            if fields.len() != 5 {
                return Err(fmt(format!(
                    "line {}: facebox takes 4 coordinates",
                    lineno + 1
                )));
            }
            let mut vals = [0f64; 4];
            for (v, s) in vals.iter_mut().zip(&fields[1..]) {
                *v = s
                    .parse()
                    .map_err(|_| fmt(format!("line {}: bad coordinate `{s}`", lineno + 1)))?;
            }
            let face = FaceBox::new(vals[0], vals[1], vals[2], vals[3])
                .map_err(|e| fmt(format!("line {}: {e}", lineno + 1)))?;
            current = Some((face, Vec::with_capacity(NUM_LANDMARKS)));
        } else {
            let (_, points) = current
                .as_mut()
                .ok_or_else(|| fmt(format!("line {}: point before any facebox", lineno + 1)))?;
            if fields.len() != 3 {
                return Err(fmt(format!(
                    "line {}: expected `index x y`",
                    lineno + 1
                )));
            }
            let idx: usize = fields[0]
                .parse()
                .map_err(|_| fmt(format!("line {}: bad index `{}`", lineno + 1, fields[0])))?;
            if idx != points.len() {
                return Err(fmt(format!(
                    "line {}: expected index {}, got {idx}",
                    lineno + 1,
                    points.len()
                )));
            }
            let x: f64 = fields[1]
                .parse()
                .map_err(|_| fmt(format!("line {}: bad x `{}`", lineno + 1, fields[1])))?;
            let y: f64 = fields[2]
                .parse()
                .map_err(|_| fmt(format!("line {}: bad y `{}`", lineno + 1, fields[2])))?;
            points.push(Point2D::new(x, y));
        }
    }
    if let Some((face, points)) = current.take() {
        entries.push(finish_entry(face, points, path)?);
    }
    // An empty file is a valid annotation: zero faces.
    Ok(entries)
}

fn finish_entry(face: FaceBox, points: Vec<Point2D>, path: &Path) -> Result<SidecarEntry> {
    if points.len() != NUM_LANDMARKS {
        return Err(Error::AnnotationFormat {
            path: path.to_path_buf(),
            reason: format!("entry lists {} points, expected {NUM_LANDMARKS}", points.len()),
        });
    }
    Ok(SidecarEntry { face, points })
}

/// Write face entries to a sidecar file. Coordinates are serialized with
/// `{}` formatting, which round-trips f64 exactly.
pub fn write_sidecar(path: &Path, entries: &[SidecarEntry]) -> Result<()> {
    use std::fmt::Write as _;
    let mut out = String::new();
    for e in entries {
        writeln!(
            out,
            "facebox {} {} {} {}",
            e.face.left, e.face.top, e.face.right, e.face.bottom
        )
        .expect("string write");
        for (i, p) in e.points.iter().enumerate() {
            writeln!(out, "{i} {} {}", p.x, p.y).expect("string write");
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Landmark provider that echoes sidecar annotations bit-exactly.
#[derive(Debug, Default, Clone)]
pub struct SidecarProvider;

impl SidecarProvider {
    pub fn new() -> Self {
        Self
    }

    fn entries_for(&self, image: &FaceImage) -> Result<Vec<SidecarEntry>> {
        let path = image.path.as_deref().ok_or_else(|| {
            Error::Input("sidecar provider needs an image with an on-disk path".into())
        })?;
        read_sidecar(&sidecar_path(path))
    }
}

impl LandmarkProvider for SidecarProvider {
    fn detect_faces(&self, image: &FaceImage) -> Result<Vec<FaceBox>> {
        if image.pixels.width() == 0 || image.pixels.height() == 0 {
            return Err(Error::Input("empty image".into()));
        }
        let mut boxes: Vec<FaceBox> = self.entries_for(image)?.iter().map(|e| e.face).collect();
        sort_boxes(&mut boxes);
        Ok(boxes)
    }

    fn detect_landmarks(&self, image: &FaceImage, face: &FaceBox) -> Result<LandmarkSet> {
        let entries = self.entries_for(image)?;
        let entry = entries
            .into_iter()
            .find(|e| e.face == *face)
            .ok_or_else(|| Error::NoMatchingFace {
                path: image.path.clone().unwrap_or_default(),
            })?;
        LandmarkSet::new(entry.points, LandmarkSource::Sidecar)
    }

    fn source(&self) -> LandmarkSource {
        LandmarkSource::Sidecar
    }
}
