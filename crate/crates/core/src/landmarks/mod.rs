//! 68-point facial landmarks behind a single provider contract.
//!
//! Two providers implement [`LandmarkProvider`]: a pretrained predictor
//! ([`predictor::PredictorProvider`], model file supplied via configuration)
//! and a deterministic sidecar-annotation provider
//! ([`sidecar::SidecarProvider`], one text file per image). Consumers only
//! ever see [`LandmarkSet`] values, so they behave identically regardless of
//! the source.

pub mod predictor;
pub mod sidecar;

use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 2-D pixel coordinate: `x` is the column, `y` the row. Points may lie
/// outside the image bounds (predictors extrapolate); consumers clamp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
}

impl Point2D {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Axis-aligned face bounding box with positive area.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceBox {
    pub left: f64,
    pub top: f64,
    pub right: f64,
    pub bottom: f64,
}

impl FaceBox {
    pub fn new(left: f64, top: f64, right: f64, bottom: f64) -> Result<Self> {
        if !(left < right && top < bottom) {
            return Err(Error::Input(format!(
                "face box must satisfy left < right and top < bottom, got \
                 ({left}, {top}, {right}, {bottom})"
            )));
        }
        Ok(Self { left, top, right, bottom })
    }

    pub fn width(&self) -> f64 {
        self.right - self.left
    }

    pub fn height(&self) -> f64 {
        self.bottom - self.top
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
}

/// Where a [`LandmarkSet`] came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandmarkSource {
    Predictor,
    Sidecar,
}

pub const NUM_LANDMARKS: usize = 68;

/// The canonical 0-based index ranges of the 68-point scheme. Together they
/// partition 0..=67.
pub mod regions {
    use std::ops::RangeInclusive;

    pub const JAW: RangeInclusive<usize> = 0..=16;
    pub const RIGHT_BROW: RangeInclusive<usize> = 17..=21;
    pub const LEFT_BROW: RangeInclusive<usize> = 22..=26;
    pub const NOSE: RangeInclusive<usize> = 27..=35;
    pub const RIGHT_EYE: RangeInclusive<usize> = 36..=41;
    pub const LEFT_EYE: RangeInclusive<usize> = 42..=47;
    pub const MOUTH: RangeInclusive<usize> = 48..=60;
    pub const LIPS: RangeInclusive<usize> = 61..=67;

    /// All named regions in index order.
    pub const ALL: [(&str, RangeInclusive<usize>); 8] = [
        ("jaw", JAW),
        ("right_brow", RIGHT_BROW),
        ("left_brow", LEFT_BROW),
        ("nose", NOSE),
        ("right_eye", RIGHT_EYE),
        ("left_eye", LEFT_EYE),
        ("mouth", MOUTH),
        ("lips", LIPS),
    ];
}

/// Exactly 68 ordered facial points, 0-based indices 0..=67.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    points: Vec<Point2D>,
    source: LandmarkSource,
}

impl LandmarkSet {
    pub fn new(points: Vec<Point2D>, source: LandmarkSource) -> Result<Self> {
        if points.len() != NUM_LANDMARKS {
            return Err(Error::Input(format!(
                "a landmark set holds exactly {NUM_LANDMARKS} points, got {}",
                points.len()
            )));
        }
        if let Some(bad) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::Input(format!("landmark {bad} is not finite")));
        }
        Ok(Self { points, source })
    }

    pub fn points(&self) -> &[Point2D] {
        &self.points
    }

    pub fn point(&self, idx: usize) -> Point2D {
        self.points[idx]
    }

    pub fn source(&self) -> LandmarkSource {
        self.source
    }

    pub fn jaw(&self) -> &[Point2D] {
        &self.points[regions::JAW]
    }

    pub fn right_brow(&self) -> &[Point2D] {
        &self.points[regions::RIGHT_BROW]
    }

    pub fn left_brow(&self) -> &[Point2D] {
        &self.points[regions::LEFT_BROW]
    }

    pub fn nose(&self) -> &[Point2D] {
        &self.points[regions::NOSE]
    }

    pub fn right_eye(&self) -> &[Point2D] {
        &self.points[regions::RIGHT_EYE]
    }

    pub fn left_eye(&self) -> &[Point2D] {
        &self.points[regions::LEFT_EYE]
    }

    pub fn mouth(&self) -> &[Point2D] {
        &self.points[regions::MOUTH]
    }

    pub fn lips(&self) -> &[Point2D] {
        &self.points[regions::LIPS]
    }
}

/// An image paired with its on-disk origin, when it has one. The sidecar
/// provider needs the path to locate the annotation file; the predictor only
/// needs the pixels.
#[derive(Debug, Clone)]
pub struct FaceImage {
    pub pixels: RgbImage,
    pub path: Option<PathBuf>,
}

impl FaceImage {
    pub fn from_file(path: &Path) -> Result<Self> {
        Ok(Self {
            pixels: crate::imgproc::load_rgb(path)?,
            path: Some(path.to_path_buf()),
        })
    }

    pub fn in_memory(pixels: RgbImage) -> Self {
        Self { pixels, path: None }
    }
}

/// Provider contract shared by the predictor and the sidecar annotations.
///
/// Providers are read-only after initialization; calls share no mutable
/// state, so one provider may serve concurrent callers.
pub trait LandmarkProvider: Send + Sync {
    /// Detect face boxes in the image. Ordering is deterministic for a fixed
    /// image: boxes are sorted by descending area, ties broken by position.
    fn detect_faces(&self, image: &FaceImage) -> Result<Vec<FaceBox>>;

    /// Predict (or look up) the 68 landmarks for one detected box.
    fn detect_landmarks(&self, image: &FaceImage, face: &FaceBox) -> Result<LandmarkSet>;

    /// Which [`LandmarkSource`] this provider stamps on its output.
    fn source(&self) -> LandmarkSource;
}

pub(crate) fn sort_boxes(boxes: &mut [FaceBox]) {
    boxes.sort_by(|a, b| {
        b.area()
            .partial_cmp(&a.area())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.left.partial_cmp(&b.left).unwrap_or(std::cmp::Ordering::Equal))
            .then(a.top.partial_cmp(&b.top).unwrap_or(std::cmp::Ordering::Equal))
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_points() -> Vec<Point2D> {
        (0..NUM_LANDMARKS)
            .map(|i| Point2D::new(i as f64, (i * 2) as f64))
            .collect()
    }

    #[test]
    fn landmark_set_requires_exactly_68_points() {
        let mut pts = grid_points();
        pts.pop();
        let err = LandmarkSet::new(pts, LandmarkSource::Sidecar).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
        assert!(LandmarkSet::new(grid_points(), LandmarkSource::Sidecar).is_ok());
    }

    #[test]
    fn regions_partition_all_indices() {
        let mut covered = [false; NUM_LANDMARKS];
        for (_, range) in regions::ALL {
            for i in range {
                assert!(!covered[i], "index {i} covered twice");
                covered[i] = true;
            }
        }
        assert!(covered.iter().all(|&c| c));
    }

    #[test]
    fn region_accessors_concatenate_to_full_set() {
        let set = LandmarkSet::new(grid_points(), LandmarkSource::Sidecar).unwrap();
        let concat: Vec<Point2D> = [
            set.jaw(),
            set.right_brow(),
            set.left_brow(),
            set.nose(),
            set.right_eye(),
            set.left_eye(),
            set.mouth(),
            set.lips(),
        ]
        .concat();
        assert_eq!(concat, set.points());
    }

    #[test]
    fn face_box_rejects_inverted_bounds() {
        assert!(FaceBox::new(10.0, 0.0, 5.0, 20.0).is_err());
        assert!(FaceBox::new(0.0, 20.0, 5.0, 10.0).is_err());
        assert!(FaceBox::new(0.0, 0.0, 5.0, 10.0).is_ok());
    }

    #[test]
    fn boxes_sort_largest_first() {
        let mut boxes = vec![
            FaceBox::new(0.0, 0.0, 2.0, 2.0).unwrap(),
            FaceBox::new(5.0, 5.0, 15.0, 15.0).unwrap(),
        ];
        sort_boxes(&mut boxes);
        assert_eq!(boxes[0].left, 5.0);
    }
}
