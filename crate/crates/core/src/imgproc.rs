//! Small raster helpers shared by the preprocessing and model stages.

use std::path::Path;

use image::{imageops, Rgb, RgbImage};

use crate::error::{Error, Result};

/// Decode an image from disk into RGB. Undecodable or empty files map to
/// [`Error::Decode`].
pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    let img = image::open(path)
        .map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?
        .to_rgb8();
    if img.width() == 0 || img.height() == 0 {
        return Err(Error::Decode {
            path: path.to_path_buf(),
            reason: "image has zero area".into(),
        });
    }
    Ok(img)
}

/// Affine mapping produced by [`letterbox`], from source pixel coordinates to
/// destination coordinates: `dst = src * scale + (dx, dy)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Letterbox {
    pub scale: f64,
    pub dx: f64,
    pub dy: f64,
}

impl Letterbox {
    pub fn map_point(&self, x: f64, y: f64) -> (f64, f64) {
        (x * self.scale + self.dx, y * self.scale + self.dy)
    }
}

/// Resize preserving aspect ratio, centred on a square canvas padded with
/// `fill`. Returns the padded image and the source→destination transform.
pub fn letterbox(src: &RgbImage, side: u32, fill: Rgb<u8>) -> (RgbImage, Letterbox) {
    assert!(side > 0, "letterbox side must be positive");
    let (w, h) = (src.width(), src.height());
    let scale = f64::from(side) / f64::from(w.max(h));
    let nw = ((f64::from(w) * scale).round() as u32).clamp(1, side);
    let nh = ((f64::from(h) * scale).round() as u32).clamp(1, side);
    let resized = if (nw, nh) == (w, h) {
        src.clone()
    } else {
        imageops::resize(src, nw, nh, imageops::FilterType::Triangle)
    };
    let dx = (side - nw) / 2;
    let dy = (side - nh) / 2;
    let mut canvas = RgbImage::from_pixel(side, side, fill);
    imageops::replace(&mut canvas, &resized, i64::from(dx), i64::from(dy));
    let tf = Letterbox {
        scale,
        dx: f64::from(dx),
        dy: f64::from(dy),
    };
    (canvas, tf)
}

/// Bilinear upsample of a scalar grid to `(out_h, out_w)`, align-corners=false.
///
/// Sample positions follow the pixel-area convention: output cell `(r, c)`
/// samples the input at `((c + 0.5) * w_in / w_out - 0.5, ...)`, clamped to
/// the valid range.
pub fn bilinear_upsample(values: &[f64], in_h: usize, in_w: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    assert_eq!(values.len(), in_h * in_w);
    let mut out = vec![0.0; out_h * out_w];
    let sx = in_w as f64 / out_w as f64;
    let sy = in_h as f64 / out_h as f64;
    for r in 0..out_h {
        let fy = ((r as f64 + 0.5) * sy - 0.5).clamp(0.0, (in_h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(in_h - 1);
        let wy = fy - y0 as f64;
        for c in 0..out_w {
            let fx = ((c as f64 + 0.5) * sx - 0.5).clamp(0.0, (in_w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(in_w - 1);
            let wx = fx - x0 as f64;
            let top = values[y0 * in_w + x0] * (1.0 - wx) + values[y0 * in_w + x1] * wx;
            let bot = values[y1 * in_w + x0] * (1.0 - wx) + values[y1 * in_w + x1] * wx;
            out[r * out_w + c] = top * (1.0 - wy) + bot * wy;
        }
    }
    out
}

/// Convert an RGB image into a row-major grayscale intensity grid in [0, 1].
pub fn to_gray(img: &RgbImage) -> Vec<f64> {
    img.pixels()
        .map(|p| {
            let [r, g, b] = p.0;
            (0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b)) / 255.0
        })
        .collect()
}
