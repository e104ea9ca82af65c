//! Grad-CAM heatmaps: which spatial regions drive a class logit.
//!
//! The map is the ReLU of the channel-weighted sum of the last convolutional
//! feature maps, where each channel's weight is the spatial mean of the
//! gradient of the target pre-softmax logit with respect to that channel.
//! Maps are max-normalized (an identically zero map stays zero) and
//! bilinearly upsampled (align-corners=false) to the model input size.

use image::{Rgb, RgbImage};

use crate::classifier::Model;
use crate::error::{Error, Result};
use crate::imgproc::bilinear_upsample;
use crate::nn::FeatureMap;

/// A normalized class-activation map at feature-tap resolution plus its
/// upsampled version at input resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub values: Vec<f64>,
    pub h: usize,
    pub w: usize,
    pub upsampled: Vec<f64>,
    pub up_h: usize,
    pub up_w: usize,
}

impl Heatmap {
    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }
}

/// Per-channel Grad-CAM weights: spatial mean of `d logit[target] / d features`.
pub fn channel_weights(model: &Model, features: &FeatureMap, target_class: usize) -> Vec<f64> {
    let grad = model.feature_gradient(features, target_class);
    let area = (features.h * features.w) as f64;
    (0..features.channels)
        .map(|c| grad.channel(c).iter().sum::<f64>() / area)
        .collect()
}

/// Compute the Grad-CAM heatmap of `image` for `target_class`.
pub fn compute_cam(model: &Model, image: &RgbImage, target_class: usize) -> Result<Heatmap> {
    if target_class >= model.class_names.len() {
        return Err(Error::Label(format!("class index {target_class} out of range")));
    }
    let input = model.prepare_image(image);
    let features = model.forward_features(&input);
    cam_from_features(model, &features, target_class, model.config.image_size.0)
}

/// Grad-CAM from an already computed feature tap; `out_side` is the square
/// side of the upsampled map.
pub fn cam_from_features(
    model: &Model,
    features: &FeatureMap,
    target_class: usize,
    out_side: usize,
) -> Result<Heatmap> {
    if features.channels == 0 || features.h == 0 || features.w == 0 {
        return Err(Error::Capability("feature tap is empty".into()));
    }
    let weights = channel_weights(model, features, target_class);
    let (h, w) = (features.h, features.w);
    let mut cam = vec![0.0f64; h * w];
    for (c, &alpha) in weights.iter().enumerate() {
        for (v, f) in cam.iter_mut().zip(features.channel(c)) {
            *v += alpha * f;
        }
    }
    for v in &mut cam {
        *v = v.max(0.0);
    }
    let max = cam.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        for v in &mut cam {
            *v /= max;
        }
    }
    let upsampled = bilinear_upsample(&cam, h, w, out_side, out_side);
    Ok(Heatmap {
        values: cam,
        h,
        w,
        upsampled,
        up_h: out_side,
        up_w: out_side,
    })
}

/// Fixed 256-entry blue→red colormap: index i maps to RGB (i, 0, 255−i).
pub fn colormap(value: f64) -> Rgb<u8> {
    let idx = (value.clamp(0.0, 1.0) * 255.0).round() as u8;
    Rgb([idx, 0, 255 - idx])
}

/// Blend the colormapped heatmap over the image:
/// `pixel = (1−alpha)·image + alpha·colormap(heatmap)`.
pub fn overlay(heatmap: &Heatmap, image: &RgbImage, alpha: f64) -> Result<RgbImage> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Input(format!("alpha {alpha} outside [0, 1]")));
    }
    let (w, h) = image.dimensions();
    if (heatmap.up_w, heatmap.up_h) != (w as usize, h as usize) {
        return Err(Error::Shape(format!(
            "heatmap is {}x{}, image is {w}x{h}",
            heatmap.up_w, heatmap.up_h
        )));
    }
    let mut out = RgbImage::new(w, h);
    for (x, y, px) in image.enumerate_pixels() {
        let v = heatmap.upsampled[y as usize * heatmap.up_w + x as usize];
        let heat = colormap(v);
        let mut blended = [0u8; 3];
        for c in 0..3 {
            let val = (1.0 - alpha) * f64::from(px.0[c]) + alpha * f64::from(heat.0[c]);
            blended[c] = val.round().clamp(0.0, 255.0) as u8;
        }
        out.put_pixel(x, y, Rgb(blended));
    }
    Ok(out)
}

/// Render the raw upsampled heatmap as a grayscale image.
pub fn heatmap_image(heatmap: &Heatmap) -> RgbImage {
    let (w, h) = (heatmap.up_w as u32, heatmap.up_h as u32);
    RgbImage::from_fn(w, h, |x, y| {
        let v = heatmap.upsampled[y as usize * heatmap.up_w + x as usize];
        let g = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        Rgb([g, g, g])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{build_model, Backbone, ClassifierConfig};

    fn toy_model() -> Model {
        build_model(ClassifierConfig {
            seed: 5,
            ..ClassifierConfig::for_backbone(Backbone::Toy)
        })
        .unwrap()
    }

    #[test]
    fn zero_head_weights_give_zero_heatmap() {
        // Zero dense weights make the logit constant in the features, so the
        // gradient — and the map — vanish.
        let mut model = toy_model();
        model.dense_head_mut().weight.iter_mut().for_each(|w| *w = 0.0);
        let img = RgbImage::from_fn(64, 64, |x, y| Rgb([x as u8 * 3, y as u8 * 3, 7]));
        let cam = compute_cam(&model, &img, 0).unwrap();
        assert!(cam.values.iter().all(|&v| v == 0.0));
        assert!(cam.upsampled.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn positive_single_value_normalizes_to_one() {
        let model = toy_model();
        // 1x1 feature map per channel, one channel positive with a positive
        // head weight for class 0.
        let mut features = FeatureMap::zeros(48, 1, 1);
        features.data[0] = 2.0;
        let mut model = model;
        {
            let head = model.dense_head_mut();
            head.weight.iter_mut().for_each(|w| *w = 0.0);
            head.weight[0] = 1.5; // class 0, channel 0
        }
        let cam = cam_from_features(&model, &features, 0, 8).unwrap();
        assert_eq!(cam.values[0], 1.0);
        assert!(cam.upsampled.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn heatmap_values_stay_in_unit_range() {
        let model = toy_model();
        let img = RgbImage::from_fn(64, 64, |x, y| {
            Rgb([((x * 7) % 256) as u8, ((y * 13) % 256) as u8, ((x + y) % 256) as u8])
        });
        for class in 0..2 {
            let cam = compute_cam(&model, &img, class).unwrap();
            assert!(cam.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert!(cam.upsampled.iter().all(|&v| (0.0..=1.0 + 1e-12).contains(&v)));
            let max = cam.max();
            assert!(max == 0.0 || (max - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_chain_follows_tap_and_input() {
        let model = toy_model();
        let img = RgbImage::new(64, 64);
        let cam = compute_cam(&model, &img, 1).unwrap();
        assert_eq!((cam.h, cam.w), (8, 8));
        assert_eq!((cam.up_h, cam.up_w), (64, 64));
    }

    #[test]
    fn alpha_zero_overlay_is_identity() {
        let model = toy_model();
        let img = RgbImage::from_fn(64, 64, |x, _| Rgb([x as u8, 100, 200]));
        let cam = compute_cam(&model, &img, 0).unwrap();
        let out = overlay(&cam, &img, 0.0).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn alpha_one_on_zero_heatmap_is_solid_colormap_zero() {
        let mut model = toy_model();
        model.dense_head_mut().weight.iter_mut().for_each(|w| *w = 0.0);
        let img = RgbImage::from_pixel(64, 64, Rgb([50, 60, 70]));
        let cam = compute_cam(&model, &img, 0).unwrap();
        let out = overlay(&cam, &img, 1.0).unwrap();
        let expected = colormap(0.0);
        assert!(out.pixels().all(|p| p == &expected));
    }

    #[test]
    fn partial_alpha_matches_direct_arithmetic() {
        let model = toy_model();
        let img = RgbImage::from_fn(64, 64, |x, y| Rgb([x as u8 * 2, y as u8 * 2, 33]));
        let cam = compute_cam(&model, &img, 0).unwrap();
        let alpha = 0.4;
        let out = overlay(&cam, &img, alpha).unwrap();
        // Independently composed blend.
        for (x, y, px) in img.enumerate_pixels() {
            let v = cam.upsampled[y as usize * 64 + x as usize];
            let heat = colormap(v);
            for c in 0..3 {
                let expect = ((1.0 - alpha) * f64::from(px.0[c]) + alpha * f64::from(heat.0[c]))
                    .round() as u8;
                assert_eq!(out.get_pixel(x, y).0[c], expect, "pixel ({x},{y}) channel {c}");
            }
        }
    }

    #[test]
    fn size_mismatch_is_shape_error() {
        let model = toy_model();
        let img = RgbImage::new(64, 64);
        let cam = compute_cam(&model, &img, 0).unwrap();
        let small = RgbImage::new(32, 32);
        assert!(matches!(overlay(&cam, &small, 0.4).unwrap_err(), Error::Shape(_)));
    }

    #[test]
    fn colormap_endpoints_are_blue_and_red() {
        assert_eq!(colormap(0.0), Rgb([0, 0, 255]));
        assert_eq!(colormap(1.0), Rgb([255, 0, 0]));
    }
}
