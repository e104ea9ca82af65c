//! Synthetic benchmark fixtures: plausible landmark layouts and a generated
//! two-class dataset of colored squares on noise, with sidecar annotations.
//!
//! The end-to-end benchmark and the explanation checks run on this data, so
//! generation is fully deterministic for a given seed. Each sample's
//! discriminative square is recorded so tests can locate it after cutting
//! and letterboxing.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::facecut::{build_face_mask, select_boundary_points};
use crate::landmarks::sidecar::{sidecar_path, write_sidecar, SidecarEntry};
use crate::landmarks::{FaceBox, LandmarkSet, LandmarkSource, Point2D, NUM_LANDMARKS};

/// Geometry knobs for one synthetic face.
#[derive(Debug, Clone, Copy)]
pub struct FaceGeometry {
    pub cx: f64,
    pub cy: f64,
    pub rx: f64,
    pub ry: f64,
    /// Brow height above the jaw hinge, as a fraction of `ry`.
    pub brow_frac: f64,
    /// Uniform per-point jitter amplitude in pixels.
    pub jitter: f64,
}

/// A randomized plausible face filling most of a `w × h` frame: jaw on a
/// convex lower elliptical arc, brows above it.
pub fn random_geometry(w: f64, h: f64, rng: &mut impl Rng) -> FaceGeometry {
    FaceGeometry {
        cx: w * rng.random_range(0.44..0.56),
        cy: h * rng.random_range(0.38..0.46),
        rx: w * rng.random_range(0.30..0.42),
        ry: h * rng.random_range(0.32..0.46),
        brow_frac: rng.random_range(0.35..0.55),
        jitter: 0.012 * w.min(h),
    }
}

/// Lay out 68 landmarks for the geometry. Boundary points (jaw, brows,
/// nasion) carry the jitter; interior points are placed plausibly.
pub fn face_landmarks(geom: &FaceGeometry, rng: &mut impl Rng) -> LandmarkSet {
    let FaceGeometry {
        cx,
        cy,
        rx,
        ry,
        brow_frac,
        jitter,
    } = *geom;
    let mut pts = vec![Point2D::new(cx, cy); NUM_LANDMARKS];

    // Jaw 0..=16: lower semicircle, left ear to right ear through the chin.
    for i in 0..=16usize {
        let t = std::f64::consts::PI - i as f64 * std::f64::consts::PI / 16.0;
        pts[i] = Point2D::new(
            cx + rx * t.cos() + jit(jitter, rng),
            cy + ry * t.sin() + jit(jitter, rng),
        );
    }
    let brow_y = cy - brow_frac * ry;
    // Right brow 17..=21 (outer to inner), left brow 22..=26 (inner to outer).
    for k in 0..5usize {
        let arch = 0.05 * ry * (std::f64::consts::PI * k as f64 / 4.0).sin();
        let dx = (0.80 - 0.1625 * k as f64) * rx;
        pts[17 + k] = Point2D::new(cx - dx + jit(jitter, rng), brow_y - arch + jit(jitter, rng));
        let dx = (0.15 + 0.1625 * k as f64) * rx;
        pts[22 + k] = Point2D::new(cx + dx + jit(jitter, rng), brow_y - arch + jit(jitter, rng));
    }
    // Nasion just below the inner brow ends.
    pts[27] = Point2D::new(cx + jit(jitter, rng), brow_y + 0.08 * ry + jit(jitter, rng));

    // Interior points: nose bridge and base, eyes, mouth, lips.
    let nose_base_y = cy + 0.05 * ry;
    for k in 0..3usize {
        let t = (k + 1) as f64 / 4.0;
        pts[28 + k] = Point2D::new(cx, pts[27].y + t * (nose_base_y - pts[27].y));
    }
    for k in 0..5usize {
        pts[31 + k] = Point2D::new(cx + (k as f64 - 2.0) * 0.08 * rx, nose_base_y);
    }
    let eye_y = brow_y + 0.25 * ry;
    for k in 0..6usize {
        let t = std::f64::consts::TAU * k as f64 / 6.0;
        pts[36 + k] = Point2D::new(cx - 0.45 * rx + 0.12 * rx * t.cos(), eye_y + 0.05 * ry * t.sin());
        pts[42 + k] = Point2D::new(cx + 0.45 * rx + 0.12 * rx * t.cos(), eye_y + 0.05 * ry * t.sin());
    }
    let mouth_y = cy + 0.45 * ry;
    for k in 0..13usize {
        let t = std::f64::consts::TAU * k as f64 / 13.0;
        pts[48 + k] = Point2D::new(cx + 0.25 * rx * t.cos(), mouth_y + 0.08 * ry * t.sin());
    }
    for k in 0..7usize {
        let t = std::f64::consts::TAU * k as f64 / 7.0;
        pts[61 + k] = Point2D::new(cx + 0.15 * rx * t.cos(), mouth_y + 0.04 * ry * t.sin());
    }
    LandmarkSet::new(pts, LandmarkSource::Sidecar).expect("68 finite points")
}

/// Convenience for property tests: a randomized plausible landmark set
/// inside a `w × h` frame.
pub fn plausible_landmarks(w: f64, h: f64, rng: &mut impl Rng) -> LandmarkSet {
    let geom = random_geometry(w, h, rng);
    face_landmarks(&geom, rng)
}

pub fn landmark_face_box(landmarks: &LandmarkSet) -> FaceBox {
    let xs = landmarks.points().iter().map(|p| p.x);
    let ys = landmarks.points().iter().map(|p| p.y);
    let left = xs.clone().fold(f64::INFINITY, f64::min);
    let right = xs.fold(f64::NEG_INFINITY, f64::max);
    let top = ys.clone().fold(f64::INFINITY, f64::min);
    let bottom = ys.fold(f64::NEG_INFINITY, f64::max);
    FaceBox::new(left, top, right + 1.0, bottom + 1.0).expect("landmark spread has positive area")
}

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub n_per_class: usize,
    pub side: u32,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_per_class: 200,
            side: 64,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSample {
    pub path: PathBuf,
    pub label: Label,
    /// Discriminative square in source coordinates: `(left, top, right,
    /// bottom)`, inclusive.
    pub square: (u32, u32, u32, u32),
}

/// Generate the two-class benchmark dataset under `out_dir`: for each
/// sample a PNG (face region on noise, class-colored square at the mouth), a
/// sidecar annotation, and a row in `meta.csv` recording the square.
pub fn generate_dataset(spec: &SyntheticSpec, out_dir: &Path) -> Result<Vec<SyntheticSample>> {
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let mut samples = Vec::with_capacity(spec.n_per_class * 2);
    for label in Label::ALL {
        let dir = out_dir.join(label.dir_name());
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for i in 0..spec.n_per_class {
            let path = dir.join(format!("sample_{i:04}.png"));
            let sample = generate_sample(&path, label, spec.side, &mut rng)?;
            samples.push(sample);
        }
    }
    let meta_path = out_dir.join("meta.csv");
    let mut meta = String::from("path,label,sq_left,sq_top,sq_right,sq_bottom\n");
    for s in &samples {
        meta.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.path.display(),
            s.label.dir_name(),
            s.square.0,
            s.square.1,
            s.square.2,
            s.square.3
        ));
    }
    std::fs::write(&meta_path, meta).map_err(|e| Error::io(&meta_path, e))?;
    Ok(samples)
}

fn generate_sample(
    path: &Path,
    label: Label,
    side: u32,
    rng: &mut ChaCha12Rng,
) -> Result<SyntheticSample> {
    let s = f64::from(side);
    // A face filling most of the frame, so the cut keeps the square.
    let geom = FaceGeometry {
        cx: s * 0.5 + rng.random_range(-0.03..0.03) * s,
        cy: s * 0.41 + rng.random_range(-0.03..0.03) * s,
        rx: s * rng.random_range(0.36..0.42),
        ry: s * rng.random_range(0.42..0.48),
        brow_frac: rng.random_range(0.40..0.50),
        jitter: 0.015 * s,
    };
    let landmarks = face_landmarks(&geom, rng);
    let boundary = select_boundary_points(&landmarks, false);
    let mask = build_face_mask(&boundary, side as usize, side as usize)?;

    // The discriminative square sits over the mouth, inside the boundary.
    let half = rng.random_range(6..=8) as i64;
    let sq_cx = (geom.cx + rng.random_range(-2.0..2.0)).round() as i64;
    let sq_cy = (geom.cy + 0.42 * geom.ry + rng.random_range(-2.0..2.0)).round() as i64;
    let max = i64::from(side) - 1;
    let square = (
        (sq_cx - half).clamp(0, max) as u32,
        (sq_cy - half).clamp(0, max) as u32,
        (sq_cx + half).clamp(0, max) as u32,
        (sq_cy + half).clamp(0, max) as u32,
    );

    // Both class colors sit far from any skin draw and from each other, so
    // each class carries its own positive evidence rather than being the
    // "absence" of the other's. The skin tone varies per image to keep the
    // face region itself uninformative.
    let square_base: [i32; 3] = match label {
        Label::WithMask => [45, 95, 215],
        Label::WithoutMask => [60, 205, 75],
    };
    let skin: [i32; 3] = [
        rng.random_range(55..=110),
        rng.random_range(45..=95),
        rng.random_range(40..=90),
    ];

    let mut img = RgbImage::new(side, side);
    for y in 0..side {
        for x in 0..side {
            let px = if (square.0..=square.2).contains(&x) && (square.1..=square.3).contains(&y) {
                noisy(square_base, 12, rng)
            } else if mask.get(y as usize, x as usize) {
                noisy(skin, 10, rng)
            } else {
                Rgb([
                    rng.random_range(0..=70),
                    rng.random_range(0..=70),
                    rng.random_range(0..=70),
                ])
            };
            img.put_pixel(x, y, px);
        }
    }
    img.save(path)
        .map_err(|e| Error::Data(format!("cannot write {}: {e}", path.display())))?;

    let entry = SidecarEntry {
        face: landmark_face_box(&landmarks),
        points: landmarks.points().to_vec(),
    };
    write_sidecar(&sidecar_path(path), &[entry])?;

    Ok(SyntheticSample {
        path: path.to_path_buf(),
        label,
        square,
    })
}

fn jit(jitter: f64, rng: &mut impl Rng) -> f64 {
    if jitter > 0.0 {
        rng.random_range(-jitter..=jitter)
    } else {
        0.0
    }
}

fn noisy(base: [i32; 3], amp: i32, rng: &mut ChaCha12Rng) -> Rgb<u8> {
    let mut out = [0u8; 3];
    for c in 0..3 {
        out[c] = (base[c] + rng.random_range(-amp..=amp)).clamp(0, 255) as u8;
    }
    Rgb(out)
}
