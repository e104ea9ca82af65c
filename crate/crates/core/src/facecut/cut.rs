//! Masking and cropping the face region, and the end-to-end cut operation.

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::facecut::{build_face_mask, select_boundary_points, BinaryMask, BoundaryPath};
use crate::landmarks::{FaceImage, LandmarkProvider};

/// The masked face region, cropped to the tight bounding box of the mask.
#[derive(Debug, Clone, PartialEq)]
pub struct CutImage {
    pub pixels: RgbImage,
    /// RGB value written outside the polygon.
    pub fill: Rgb<u8>,
    /// `(top, left)` offset of the crop within the source image.
    pub origin: (usize, usize),
}

/// Which detected faces to process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FacePolicy {
    /// Only the largest-area box.
    #[default]
    Largest,
    /// One cut per detected face.
    All,
}

/// What to do when no face is detected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoFacePolicy {
    /// Produce nothing for this image.
    #[default]
    Skip,
    /// Pass the original image through unchanged.
    Passthrough,
    /// Fail the operation.
    Error,
}

#[derive(Debug, Clone)]
pub struct CutOptions {
    pub faces: FacePolicy,
    pub no_face: NoFacePolicy,
    pub include_point_zero: bool,
    pub fill: Rgb<u8>,
}

impl Default for CutOptions {
    fn default() -> Self {
        Self {
            faces: FacePolicy::Largest,
            no_face: NoFacePolicy::Skip,
            include_point_zero: false,
            fill: Rgb([0, 0, 0]),
        }
    }
}

/// Result of [`cut_face`], distinguishing real cuts from the no-face paths
/// so callers can record provenance.
#[derive(Debug, Clone, PartialEq)]
pub enum FaceCutOutcome {
    /// One cut per processed face.
    Faces(Vec<CutImage>),
    /// No face found; the original image passed through unchanged.
    NoFacePassthrough(CutImage),
    /// No face found; nothing produced.
    NoFaceSkipped,
}

impl FaceCutOutcome {
    /// The produced cuts, in order (empty for the skipped case).
    pub fn images(&self) -> &[CutImage] {
        match self {
            FaceCutOutcome::Faces(v) => v,
            FaceCutOutcome::NoFacePassthrough(img) => std::slice::from_ref(img),
            FaceCutOutcome::NoFaceSkipped => &[],
        }
    }

    pub fn face_found(&self) -> bool {
        matches!(self, FaceCutOutcome::Faces(_))
    }
}

/// Mask the image (outside the mask → `fill`) and crop to the tight bounding
/// box of set cells.
pub fn apply_cut(image: &RgbImage, mask: &BinaryMask, fill: Rgb<u8>) -> Result<CutImage> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    if (mask.width(), mask.height()) != (w, h) {
        return Err(Error::Shape(format!(
            "mask is {}x{}, image is {w}x{h}",
            mask.width(),
            mask.height()
        )));
    }
    let (top, left, bottom, right) = mask.bounding_box().ok_or(Error::EmptyMask)?;
    let (out_w, out_h) = (right - left + 1, bottom - top + 1);
    let mut out = RgbImage::from_pixel(out_w as u32, out_h as u32, fill);
    for r in top..=bottom {
        for c in left..=right {
            if mask.get(r, c) {
                out.put_pixel((c - left) as u32, (r - top) as u32, *image.get_pixel(c as u32, r as u32));
            }
        }
    }
    Ok(CutImage {
        pixels: out,
        fill,
        origin: (top, left),
    })
}

/// Detect faces, predict landmarks, build the boundary mask and cut — the
/// full preprocessing composition for one image.
pub fn cut_face(
    image: &FaceImage,
    provider: &dyn LandmarkProvider,
    options: &CutOptions,
) -> Result<FaceCutOutcome> {
    let boxes = provider.detect_faces(image)?;
    if boxes.is_empty() {
        return match options.no_face {
            NoFacePolicy::Skip => Ok(FaceCutOutcome::NoFaceSkipped),
            NoFacePolicy::Error => Err(Error::NoFace),
            NoFacePolicy::Passthrough => Ok(FaceCutOutcome::NoFacePassthrough(CutImage {
                pixels: image.pixels.clone(),
                fill: options.fill,
                origin: (0, 0),
            })),
        };
    }
    let selected: Vec<_> = match options.faces {
        FacePolicy::Largest => vec![boxes[0]], // providers sort largest-first
        FacePolicy::All => boxes,
    };
    let (h, w) = (image.pixels.height() as usize, image.pixels.width() as usize);
    let mut cuts = Vec::with_capacity(selected.len());
    for face in &selected {
        let landmarks = provider.detect_landmarks(image, face)?;
        let path = select_boundary_points(&landmarks, options.include_point_zero);
        let mask = build_face_mask(&path, h, w)?;
        cuts.push(apply_cut(&image.pixels, &mask, options.fill)?);
    }
    Ok(FaceCutOutcome::Faces(cuts))
}

/// Debug visualization: the source image with a circle marker on each
/// boundary point and the boundary polygon outlined.
pub fn render_boundary_overlay(image: &RgbImage, path: &BoundaryPath) -> RgbImage {
    let mut out = image.clone();
    let (w, h) = (out.width() as i64, out.height() as i64);
    let marker = Rgb([0, 255, 0]);
    let outline = Rgb([255, 0, 0]);
    let n = path.points().len();
    for i in 0..n {
        let a = path.points()[i];
        let b = path.points()[(i + 1) % n];
        draw_line(&mut out, a.x, a.y, b.x, b.y, outline);
    }
    for p in path.points() {
        let (cx, cy) = (p.x.round() as i64, p.y.round() as i64);
        for dy in -2..=2i64 {
            for dx in -2..=2i64 {
                if dx * dx + dy * dy <= 4 {
                    let (x, y) = (cx + dx, cy + dy);
                    if (0..w).contains(&x) && (0..h).contains(&y) {
                        out.put_pixel(x as u32, y as u32, marker);
                    }
                }
            }
        }
    }
    out
}

fn draw_line(img: &mut RgbImage, x0: f64, y0: f64, x1: f64, y1: f64, color: Rgb<u8>) {
    let steps = ((x1 - x0).abs().max((y1 - y0).abs()).ceil() as usize).max(1);
    let (w, h) = (img.width() as i64, img.height() as i64);
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        let x = (x0 + t * (x1 - x0)).round() as i64;
        let y = (y0 + t * (y1 - y0)).round() as i64;
        if (0..w).contains(&x) && (0..h).contains(&y) {
            img.put_pixel(x as u32, y as u32, color);
        }
    }
}
