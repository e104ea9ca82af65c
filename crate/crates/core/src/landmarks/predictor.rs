//! Pretrained landmark predictor provider.
//!
//! The provider loads a single model file (JSON, see [`PredictorModel`]) that
//! bundles two parts:
//!
//! * a normalized-cross-correlation face detector: a square grayscale
//!   template scanned over an image pyramid, thresholded and de-duplicated
//!   with non-maximum suppression;
//! * a cascaded-regression landmark predictor: a mean shape in box-normalized
//!   coordinates refined by stages of regression trees splitting on pixel
//!   intensity differences. With zero stages the predictor places the mean
//!   shape into the face box.
//!
//! Both halves are deterministic. A missing or corrupt model file surfaces as
//! a provider-initialization error.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgproc::to_gray;
use crate::landmarks::{
    sort_boxes, FaceBox, FaceImage, LandmarkProvider, LandmarkSet, LandmarkSource, Point2D,
    NUM_LANDMARKS,
};

/// Intensity-difference split: compares two probe pixels, each anchored to a
/// landmark of the current shape estimate plus an offset in box units.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitFeature {
    pub anchor_a: usize,
    pub offset_a: (f64, f64),
    pub anchor_b: usize,
    pub offset_b: (f64, f64),
    pub threshold: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum TreeNode {
    Split {
        feature: SplitFeature,
        left: usize,
        right: usize,
    },
    /// Per-landmark shape delta in box-normalized coordinates.
    Leaf { delta: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CascadeStage {
    pub trees: Vec<RegressionTree>,
}

/// Square grayscale template for NCC face detection. `values` is row-major,
/// `side * side` long, zero-mean and unit-norm.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectorTemplate {
    pub side: usize,
    pub values: Vec<f64>,
    pub threshold: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictorModel {
    /// 68 points in box-normalized coordinates ((0,0) = box top-left,
    /// (1,1) = box bottom-right).
    pub mean_shape: Vec<(f64, f64)>,
    pub stages: Vec<CascadeStage>,
    pub detector: DetectorTemplate,
}

impl PredictorModel {
    pub fn validate(&self) -> Result<()> {
        if self.mean_shape.len() != NUM_LANDMARKS {
            return Err(Error::ProviderInit(format!(
                "mean shape holds {} points, expected {NUM_LANDMARKS}",
                self.mean_shape.len()
            )));
        }
        if self.detector.side < 4 || self.detector.values.len() != self.detector.side * self.detector.side
        {
            return Err(Error::ProviderInit("malformed detector template".into()));
        }
        for stage in &self.stages {
            for tree in &stage.trees {
                for node in &tree.nodes {
                    match node {
                        TreeNode::Split { feature, left, right } => {
                            if *left >= tree.nodes.len() || *right >= tree.nodes.len() {
                                return Err(Error::ProviderInit("tree child out of range".into()));
                            }
                            if feature.anchor_a >= NUM_LANDMARKS || feature.anchor_b >= NUM_LANDMARKS {
                                return Err(Error::ProviderInit("split anchor out of range".into()));
                            }
                        }
                        TreeNode::Leaf { delta } => {
                            if delta.len() != NUM_LANDMARKS {
                                return Err(Error::ProviderInit("leaf delta size mismatch".into()));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)
            .map_err(|e| Error::ProviderInit(format!("serialize model: {e}")))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Provider backed by a [`PredictorModel`] file.
#[derive(Debug)]
pub struct PredictorProvider {
    model: PredictorModel,
}

impl PredictorProvider {
    /// Load the model file; any read or parse failure is a
    /// provider-initialization error.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::ProviderInit(format!("cannot read predictor model {}: {e}", path.display()))
        })?;
        let model: PredictorModel = serde_json::from_str(&text).map_err(|e| {
            Error::ProviderInit(format!("corrupt predictor model {}: {e}", path.display()))
        })?;
        Self::from_model(model)
    }

    pub fn from_model(model: PredictorModel) -> Result<Self> {
        model.validate()?;
        Ok(Self { model })
    }
}

impl LandmarkProvider for PredictorProvider {
    fn detect_faces(&self, image: &FaceImage) -> Result<Vec<FaceBox>> {
        let (w, h) = image.pixels.dimensions();
        if w == 0 || h == 0 {
            return Err(Error::Input("empty image".into()));
        }
        let gray = to_gray(&image.pixels);
        let mut boxes = detect_ncc(&gray, w as usize, h as usize, &self.model.detector);
        sort_boxes(&mut boxes);
        Ok(boxes)
    }

    fn detect_landmarks(&self, image: &FaceImage, face: &FaceBox) -> Result<LandmarkSet> {
        let (w, h) = image.pixels.dimensions();
        let gray = to_gray(&image.pixels);
        let sampler = GraySampler {
            data: &gray,
            w: w as usize,
            h: h as usize,
        };

        // Current shape estimate in box-normalized coordinates.
        let mut shape = self.model.mean_shape.clone();
        for stage in &self.model.stages {
            let mut delta = vec![(0.0, 0.0); NUM_LANDMARKS];
            for tree in &stage.trees {
                let leaf = walk_tree(tree, &shape, face, &sampler);
                for (d, l) in delta.iter_mut().zip(leaf) {
                    d.0 += l.0;
                    d.1 += l.1;
                }
            }
            for (s, d) in shape.iter_mut().zip(&delta) {
                s.0 += d.0;
                s.1 += d.1;
            }
        }

        let points = shape
            .iter()
            .map(|&(nx, ny)| Point2D::new(face.left + nx * face.width(), face.top + ny * face.height()))
            .collect();
        LandmarkSet::new(points, LandmarkSource::Predictor)
    }

    fn source(&self) -> LandmarkSource {
        LandmarkSource::Predictor
    }
}

struct GraySampler<'a> {
    data: &'a [f64],
    w: usize,
    h: usize,
}

impl GraySampler<'_> {
    fn at(&self, x: f64, y: f64) -> f64 {
        let xi = (x.round() as i64).clamp(0, self.w as i64 - 1) as usize;
        let yi = (y.round() as i64).clamp(0, self.h as i64 - 1) as usize;
        self.data[yi * self.w + xi]
    }
}

fn walk_tree<'m>(
    tree: &'m RegressionTree,
    shape: &[(f64, f64)],
    face: &FaceBox,
    sampler: &GraySampler<'_>,
) -> &'m [(f64, f64)] {
    let probe = |anchor: usize, offset: (f64, f64)| {
        let (nx, ny) = shape[anchor];
        let x = face.left + (nx + offset.0) * face.width();
        let y = face.top + (ny + offset.1) * face.height();
        sampler.at(x, y)
    };
    let mut idx = 0;
    loop {
        match &tree.nodes[idx] {
            TreeNode::Leaf { delta } => return delta,
            TreeNode::Split { feature, left, right } => {
                let diff = probe(feature.anchor_a, feature.offset_a)
                    - probe(feature.anchor_b, feature.offset_b);
                idx = if diff > feature.threshold { *left } else { *right };
            }
        }
    }
}

/// Multi-scale NCC template scan. Windows grow by a factor of 1.25 starting
/// at the template side; candidates above the score threshold are merged
/// with IoU-0.3 non-maximum suppression.
fn detect_ncc(gray: &[f64], w: usize, h: usize, tpl: &DetectorTemplate) -> Vec<FaceBox> {
    let s = tpl.side;
    let mut candidates: Vec<(f64, FaceBox)> = Vec::new();
    let mut win = s;
    while win <= w.min(h) {
        let stride = (win / 8).max(1);
        let mut top = 0;
        while top + win <= h {
            let mut left = 0;
            while left + win <= w {
                if let Some(score) = ncc_score(gray, w, left, top, win, tpl) {
                    if score > tpl.threshold {
                        let bx = FaceBox {
                            left: left as f64,
                            top: top as f64,
                            right: (left + win) as f64,
                            bottom: (top + win) as f64,
                        };
                        candidates.push((score, bx));
                    }
                }
                left += stride;
            }
            top += stride;
        }
        let next = (win as f64 * 1.25).ceil() as usize;
        win = next.max(win + 1);
    }

    candidates.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.left.partial_cmp(&b.1.left).unwrap_or(std::cmp::Ordering::Equal))
            .then(a.1.top.partial_cmp(&b.1.top).unwrap_or(std::cmp::Ordering::Equal))
    });
    let mut kept: Vec<FaceBox> = Vec::new();
    for (_, cand) in candidates {
        if kept.iter().all(|k| iou(k, &cand) <= 0.3) {
            kept.push(cand);
        }
    }
    kept
}

/// NCC of one window against the template, subsampling the window down to the
/// template grid. Zero-variance windows (e.g. a blank image) score `None`.
fn ncc_score(gray: &[f64], w: usize, left: usize, top: usize, win: usize, tpl: &DetectorTemplate) -> Option<f64> {
    let s = tpl.side;
    let step = win as f64 / s as f64;
    let mut patch = Vec::with_capacity(s * s);
    for r in 0..s {
        let y = top + ((r as f64 + 0.5) * step) as usize;
        for c in 0..s {
            let x = left + ((c as f64 + 0.5) * step) as usize;
            patch.push(gray[y.min(top + win - 1) * w + x.min(left + win - 1)]);
        }
    }
    let n = patch.len() as f64;
    let mean = patch.iter().sum::<f64>() / n;
    let mut norm = 0.0;
    for v in &mut patch {
        *v -= mean;
        norm += *v * *v;
    }
    if norm < 1e-12 {
        return None;
    }
    let norm = norm.sqrt();
    let score = patch
        .iter()
        .zip(&tpl.values)
        .map(|(p, t)| p * t)
        .sum::<f64>()
        / norm;
    Some(score)
}

fn iou(a: &FaceBox, b: &FaceBox) -> f64 {
    let ix = (a.right.min(b.right) - a.left.max(b.left)).max(0.0);
    let iy = (a.bottom.min(b.bottom) - a.top.max(b.top)).max(0.0);
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Normalize a raw template to zero mean and unit norm.
pub fn normalize_template(raw: &[f64]) -> Vec<f64> {
    let n = raw.len() as f64;
    let mean = raw.iter().sum::<f64>() / n;
    let mut out: Vec<f64> = raw.iter().map(|v| v - mean).collect();
    let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 1e-12 {
        for v in &mut out {
            *v /= norm;
        }
    }
    out
}
