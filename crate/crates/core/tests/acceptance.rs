//! Acceptance suite: one test per criterion, each printing a pass line.
//!
//! Everything runs on generated fixtures with fixed seeds; no external data
//! or weights are required.

use image::{Rgb, RgbImage};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use tempfile::TempDir;

use facecut_core::classifier::{
    build_model, train, Backbone, ClassifierConfig, LossKind, Model,
};
use facecut_core::dataset::{
    preprocess_dataset, scan_dataset, split_dataset, DatasetManifest, Label, RecordSource,
    SampleRecord, Split,
};
use facecut_core::explain::{channel_weights, compute_cam};
use facecut_core::facecut::{
    build_face_mask, cut_face, point_in_polygon, rasterize_by_point_test, select_boundary_points,
    BoundaryPath, CutOptions, FaceCutOutcome, NoFacePolicy,
};
use facecut_core::imgproc::letterbox;
use facecut_core::landmarks::sidecar::{sidecar_path, SidecarProvider};
use facecut_core::landmarks::{FaceImage, Point2D};
use facecut_core::metrics::{compute_metrics, evaluate, reference_confusion_matrix};
use facecut_core::nn::FeatureMap;
use facecut_core::synthetic::{generate_dataset, plausible_landmarks, SyntheticSpec};
use facecut_core::Error;

fn pass(n: usize, what: &str) {
    println!("[acceptance] criterion {n} ({what}): PASS");
}

/// Criterion 1: metrics on the reference confusion matrix, ±5e-5, and the
/// two-decimal table reproduction.
#[test]
fn criterion_1_metrics_oracle() {
    let report = compute_metrics(&reference_confusion_matrix());
    let tol = 5e-5;
    assert!((report.accuracy - 0.99107).abs() <= tol, "accuracy {}", report.accuracy);
    let ca: Vec<f64> = report.class_accuracy.iter().map(|v| v.unwrap()).collect();
    assert!((ca[0] - 0.98752).abs() <= tol, "class_accuracy[0] {}", ca[0]);
    assert!((ca[1] - 0.99466).abs() <= tol, "class_accuracy[1] {}", ca[1]);
    assert!((report.acsa.unwrap() - 0.99109).abs() <= tol, "acsa {:?}", report.acsa);
    let ppv: Vec<f64> = report.ppv.iter().map(|v| v.unwrap()).collect();
    assert!((ppv[0] - 0.99468).abs() <= tol, "ppv[0] {}", ppv[0]);
    assert!((ppv[1] - 0.98746).abs() <= tol, "ppv[1] {}", ppv[1]);
    assert_eq!(report.support, vec![2084, 2059]);
    // Rounding to two decimals reproduces the reference accuracy and the
    // supports are exact.
    assert_eq!(format!("{:.2}", report.accuracy), "0.99");
    assert_eq!(report.support.iter().sum::<u64>(), 4143);
    pass(1, "metrics oracle");
}

/// Random star-shaped polygon: vertices at sorted angles around a centre,
/// simple by construction.
fn random_star_polygon(rng: &mut ChaCha12Rng, grid: f64) -> BoundaryPath {
    let n = rng.random_range(3..=28usize);
    let cx = rng.random_range(grid * 0.25..grid * 0.75);
    let cy = rng.random_range(grid * 0.25..grid * 0.75);
    let max_r = grid * 0.45;
    let mut angles: Vec<f64> = (0..n)
        .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
        .collect();
    angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
    angles.dedup();
    while angles.len() < 3 {
        angles.push(rng.random_range(0.0..std::f64::consts::TAU));
        angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
        angles.dedup();
    }
    let points = angles
        .iter()
        .map(|&t| {
            let r = rng.random_range(max_r * 0.2..max_r);
            Point2D::new(cx + r * t.cos(), cy + r * t.sin())
        })
        .collect();
    BoundaryPath::from_points(points)
}

/// Criterion 2: scanline fill equals the brute-force even–odd oracle
/// cell-for-cell on 200 random polygons.
#[test]
fn criterion_2_rasterization_oracle() {
    let mut rng = ChaCha12Rng::seed_from_u64(0x5ca1ab1e);
    let mut mismatches = 0usize;
    for case in 0..200 {
        let side = rng.random_range(8..=64usize);
        let poly = random_star_polygon(&mut rng, side as f64);
        let scan = build_face_mask(&poly, side, side).unwrap();
        let brute = rasterize_by_point_test(&poly, side, side).unwrap();
        for r in 0..side {
            for c in 0..side {
                if scan.get(r, c) != brute.get(r, c) {
                    mismatches += 1;
                    eprintln!("mismatch case {case} at ({r},{c})");
                }
            }
        }
    }
    assert_eq!(mismatches, 0);
    pass(2, "rasterization oracle, 200 polygons");
}

/// Criterion 3: 100 random plausible landmark sets give simple boundary
/// polygons with the expected index multisets.
#[test]
fn criterion_3_boundary_path_properties() {
    let mut rng = ChaCha12Rng::seed_from_u64(0xb0a7);
    for _ in 0..100 {
        let set = plausible_landmarks(256.0, 256.0, &mut rng);
        let path = select_boundary_points(&set, false);
        assert!(path.is_simple(), "27-point path self-intersects");
        let mut indices = path.indices().to_vec();
        indices.sort_unstable();
        assert_eq!(indices, (1..=27).collect::<Vec<_>>());

        let path0 = select_boundary_points(&set, true);
        assert!(path0.is_simple(), "28-point path self-intersects");
        let mut indices = path0.indices().to_vec();
        indices.sort_unstable();
        assert_eq!(indices, (0..=27).collect::<Vec<_>>());
    }
    pass(3, "boundary-path properties, 100 landmark sets");
}

/// Criterion 4: every non-fill pixel of every cut lies inside the boundary
/// polygon, and the no-face policies behave as specified.
#[test]
fn criterion_4_cut_soundness() {
    let dir = TempDir::new().unwrap();
    let spec = SyntheticSpec {
        n_per_class: 6,
        side: 64,
        seed: 404,
    };
    let samples = generate_dataset(&spec, dir.path()).unwrap();
    let provider = SidecarProvider::new();
    let fill = Rgb([255, 0, 255]); // absent from generated pixels
    let options = CutOptions {
        fill,
        ..CutOptions::default()
    };
    for sample in &samples {
        let image = FaceImage::from_file(&sample.path).unwrap();
        let outcome = cut_face(&image, &provider, &options).unwrap();
        let FaceCutOutcome::Faces(cuts) = &outcome else {
            panic!("expected a face in {}", sample.path.display());
        };
        assert_eq!(cuts.len(), 1);
        let cut = &cuts[0];
        let entries =
            facecut_core::landmarks::sidecar::read_sidecar(&sidecar_path(&sample.path)).unwrap();
        let set = facecut_core::landmarks::LandmarkSet::new(
            entries[0].points.clone(),
            facecut_core::landmarks::LandmarkSource::Sidecar,
        )
        .unwrap();
        let boundary = select_boundary_points(&set, false);
        // Clamp exactly as rasterization does before checking containment.
        let clamped: Vec<Point2D> = boundary
            .points()
            .iter()
            .map(|p| Point2D::new(p.x.clamp(0.0, 63.0), p.y.clamp(0.0, 63.0)))
            .collect();
        let (top, left) = cut.origin;
        for (x, y, px) in cut.pixels.enumerate_pixels() {
            if px != &fill {
                let sx = (left + x as usize) as f64;
                let sy = (top + y as usize) as f64;
                assert!(
                    point_in_polygon(sx, sy, &clamped),
                    "non-fill pixel ({sx},{sy}) outside polygon in {}",
                    sample.path.display()
                );
            }
        }
    }

    // No-face policy matrix on an image whose sidecar lists zero faces.
    let no_face_path = dir.path().join("empty.png");
    RgbImage::from_pixel(32, 32, Rgb([9, 9, 9]))
        .save(&no_face_path)
        .unwrap();
    std::fs::write(sidecar_path(&no_face_path), "").unwrap();
    let image = FaceImage::from_file(&no_face_path).unwrap();

    let skip = cut_face(&image, &provider, &CutOptions { no_face: NoFacePolicy::Skip, ..options.clone() }).unwrap();
    assert_eq!(skip, FaceCutOutcome::NoFaceSkipped);
    assert!(skip.images().is_empty());

    let pass_through = cut_face(
        &image,
        &provider,
        &CutOptions { no_face: NoFacePolicy::Passthrough, ..options.clone() },
    )
    .unwrap();
    let FaceCutOutcome::NoFacePassthrough(copy) = &pass_through else {
        panic!("expected passthrough");
    };
    assert_eq!(copy.pixels, image.pixels);
    assert_eq!(copy.origin, (0, 0));

    let err = cut_face(
        &image,
        &provider,
        &CutOptions { no_face: NoFacePolicy::Error, ..options.clone() },
    )
    .unwrap_err();
    assert!(matches!(err, Error::NoFace));

    pass(4, "cut soundness and no-face policy matrix");
}

fn synthetic_manifest(n_with: usize, n_without: usize) -> DatasetManifest {
    let mut records = Vec::new();
    for (label, n) in [(Label::WithMask, n_with), (Label::WithoutMask, n_without)] {
        for i in 0..n {
            let path = std::path::PathBuf::from(format!("/virtual/{}/img_{i:05}.png", label.dir_name()));
            records.push(SampleRecord {
                path: path.clone(),
                label,
                split: None,
                face_found: true,
                landmark_source: RecordSource::None,
                source_path: path,
            });
        }
    }
    DatasetManifest {
        records,
        seed: None,
        ratios: None,
    }
}

/// Criterion 5: deterministic stratified splitting of a 1,000-record
/// manifest, sizes within ±1 of 60/20/20 per class.
#[test]
fn criterion_5_split_determinism_and_stratification() {
    let manifest = synthetic_manifest(500, 500);
    for seed in [0u64, 7, 42, 31337, u64::MAX] {
        let split = split_dataset(&manifest, seed, (0.6, 0.2, 0.2)).unwrap();
        for label in Label::ALL {
            let count = |s: Split| {
                split
                    .records
                    .iter()
                    .filter(|r| r.label == label && r.split == Some(s))
                    .count() as f64
            };
            let n = 500.0;
            assert!((count(Split::Train) - 0.6 * n).abs() <= 1.0);
            assert!((count(Split::Val) - 0.2 * n).abs() <= 1.0);
            assert!((count(Split::Test) - 0.2 * n).abs() <= 1.0);
        }
        // Identical seed, identical assignment.
        let again = split_dataset(&manifest, seed, (0.6, 0.2, 0.2)).unwrap();
        assert_eq!(split, again);

        // Disk-order shuffling does not change the assignment.
        let mut reordered = manifest.clone();
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0xdead);
        use rand::seq::SliceRandom;
        reordered.records.shuffle(&mut rng);
        let reassigned = split_dataset(&reordered, seed, (0.6, 0.2, 0.2)).unwrap();
        for rec in &split.records {
            let other = reassigned
                .records
                .iter()
                .find(|r| r.source_path == rec.source_path)
                .unwrap();
            assert_eq!(rec.split, other.split);
        }
        // Every record lands in exactly one split.
        assert!(split.records.iter().all(|r| r.split.is_some()));
    }
    pass(5, "split determinism & stratification");
}

struct Benchmark {
    _dir: TempDir,
    samples: Vec<facecut_core::synthetic::SyntheticSample>,
    split: DatasetManifest,
    trained: facecut_core::classifier::TrainedModel,
}

/// Shared end-to-end run for criteria 6 and 8: 400 generated images, face
/// cut, 60/20/20 split, toy backbone, 10 epochs, fixed seeds.
fn run_benchmark() -> Benchmark {
    let dir = TempDir::new().unwrap();
    let raw = dir.path().join("raw");
    let cut = dir.path().join("cut");
    let spec = SyntheticSpec {
        n_per_class: 200,
        side: 64,
        seed: 606,
    };
    let samples = generate_dataset(&spec, &raw).unwrap();
    assert_eq!(samples.len(), 400);

    let scanned = scan_dataset(&raw).unwrap();
    let provider = SidecarProvider::new();
    let derived = preprocess_dataset(&scanned, &provider, &CutOptions::default(), &cut).unwrap();
    assert_eq!(derived.records.len(), 400);
    assert!(derived.records.iter().all(|r| r.face_found));

    let split = split_dataset(&derived, 11, (0.6, 0.2, 0.2)).unwrap();
    let config = ClassifierConfig {
        epochs: 10,
        learning_rate: 1e-2,
        batch_size: 16,
        weight_decay: 0.3,
        seed: 17,
        ..ClassifierConfig::for_backbone(Backbone::Toy)
    };
    let model = build_model(config).unwrap();
    let trained = train(model, &split).unwrap();
    Benchmark {
        _dir: dir,
        samples,
        split,
        trained,
    }
}

/// Criterion 6: synthetic end-to-end benchmark reaches test ACSA ≥ 0.95 with
/// finite losses at every epoch.
/// Criterion 8: Grad-CAM heatmaps are in range with the right shape chain,
/// and the true-class CAM concentrates on the discriminative square for at
/// least 90% of test fixtures.
#[test]
fn criteria_6_and_8_end_to_end_and_gradcam() {
    let bench = run_benchmark();

    assert_eq!(bench.trained.history.len(), 10);
    for (i, s) in bench.trained.history.iter().enumerate() {
        assert!(s.is_finite(), "non-finite stats at epoch {i}");
    }
    let (_, report) = evaluate(&bench.trained, &bench.split, Split::Test).unwrap();
    let acsa = report.acsa.expect("both classes in the test split");
    assert!(acsa >= 0.95, "test acsa {acsa} below 0.95");
    pass(6, &format!("synthetic end-to-end, test acsa {acsa:.4}"));

    // Criterion 8 on the same run.
    let model = &bench.trained.model;
    let provider = SidecarProvider::new();
    let square_of = |source: &std::path::Path| {
        bench
            .samples
            .iter()
            .find(|s| s.path == source)
            .map(|s| s.square)
            .expect("sample for source path")
    };
    let mut checked = 0usize;
    let mut sensitive = 0usize;
    for rec in bench.split.records_in(Split::Test) {
        let (l, t, r, b) = square_of(&rec.source_path);
        let image = FaceImage::from_file(&rec.source_path).unwrap();
        let outcome = cut_face(&image, &provider, &CutOptions::default()).unwrap();
        let FaceCutOutcome::Faces(cuts) = outcome else {
            panic!("no face in benchmark fixture")
        };
        let cut = &cuts[0];
        let class_idx = model.class_index(rec.label.dir_name()).unwrap();
        let cam = compute_cam(model, &cut.pixels, class_idx).unwrap();

        // Range and shape chain.
        assert!(cam.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!((cam.h, cam.w), (8, 8));
        assert_eq!((cam.up_h, cam.up_w), (64, 64));

        // Map the square from source coords through the cut and letterbox.
        let (top, left) = cut.origin;
        let side = model.config.image_size.0 as u32;
        let (_, tf) = letterbox(&cut.pixels, side, Rgb(model.config.pad_fill));
        let (x0, y0) = tf.map_point(f64::from(l) - left as f64, f64::from(t) - top as f64);
        let (x1, y1) = tf.map_point(f64::from(r) - left as f64, f64::from(b) - top as f64);

        let mut inside = (0.0, 0usize);
        let mut outside = (0.0, 0usize);
        for y in 0..64usize {
            for x in 0..64usize {
                let v = cam.upsampled[y * 64 + x];
                let in_square =
                    (x as f64) >= x0 && (x as f64) <= x1 && (y as f64) >= y0 && (y as f64) <= y1;
                if in_square {
                    inside.0 += v;
                    inside.1 += 1;
                } else {
                    outside.0 += v;
                    outside.1 += 1;
                }
            }
        }
        let mean_in = inside.0 / inside.1 as f64;
        let mean_out = outside.0 / outside.1 as f64;
        checked += 1;
        if mean_in > mean_out {
            sensitive += 1;
        }
    }
    assert!(checked >= 70, "unexpectedly small test split: {checked}");
    let frac = sensitive as f64 / checked as f64;
    assert!(
        frac >= 0.9,
        "class-sensitive CAM on only {sensitive}/{checked} fixtures"
    );
    pass(8, &format!("Grad-CAM invariants, sensitivity {frac:.3}"));
}

fn micro_batch(model: &Model, seed: u64, n: usize) -> Vec<(FeatureMap, usize)> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let img = RgbImage::from_fn(64, 64, |_, _| {
                Rgb([rng.random::<u8>(), rng.random::<u8>(), rng.random::<u8>()])
            });
            (model.prepare_image(&img), i % 2)
        })
        .collect()
}

/// Criterion 7: dense-layer loss gradients and Grad-CAM channel weights
/// match central finite differences within relative error 1e-3.
#[test]
fn criterion_7_gradient_checks() {
    let config = ClassifierConfig {
        seed: 23,
        ..ClassifierConfig::for_backbone(Backbone::Toy)
    };
    let mut model = build_model(config).unwrap();
    let batch = micro_batch(&model, 99, 4);

    // Dense-layer gradients against central differences.
    let analytic = model.loss_gradients(&batch);
    let h = 1e-5;
    let n_weights = model.dense_head().weight.len();
    for i in 0..n_weights {
        let original = model.dense_head().weight[i];
        model.dense_head_mut().weight[i] = original + h;
        let plus = model.dataset_loss(&batch);
        model.dense_head_mut().weight[i] = original - h;
        let minus = model.dataset_loss(&batch);
        model.dense_head_mut().weight[i] = original;
        let fd = (plus - minus) / (2.0 * h);
        let rel = (analytic.head_weight[i] - fd).abs() / fd.abs().max(1e-8);
        assert!(
            rel <= 1e-3,
            "head weight {i}: analytic {} vs fd {fd} (rel {rel})",
            analytic.head_weight[i]
        );
    }
    for i in 0..model.dense_head().bias.len() {
        let original = model.dense_head().bias[i];
        model.dense_head_mut().bias[i] = original + h;
        let plus = model.dataset_loss(&batch);
        model.dense_head_mut().bias[i] = original - h;
        let minus = model.dataset_loss(&batch);
        model.dense_head_mut().bias[i] = original;
        let fd = (plus - minus) / (2.0 * h);
        let rel = (analytic.head_bias[i] - fd).abs() / fd.abs().max(1e-8);
        assert!(rel <= 1e-3, "head bias {i}: rel {rel}");
    }

    // Grad-CAM channel weights against a uniform per-channel perturbation:
    // adding eps to every cell of channel k changes the logit by
    // eps * area * alpha_k.
    let (input, _) = &batch[0];
    let features = model.forward_features(input);
    for class in 0..2 {
        let alphas = channel_weights(&model, &features, class);
        let area = (features.h * features.w) as f64;
        let eps = 1e-4;
        for k in 0..features.channels {
            let mut plus = features.clone();
            let mut minus = features.clone();
            let (h0, w0) = (features.h, features.w);
            for idx in k * h0 * w0..(k + 1) * h0 * w0 {
                plus.data[idx] += eps;
                minus.data[idx] -= eps;
            }
            let lp = model.logits_from_features(&plus)[class];
            let lm = model.logits_from_features(&minus)[class];
            let fd_alpha = (lp - lm) / (2.0 * eps) / area;
            let rel = (alphas[k] - fd_alpha).abs() / fd_alpha.abs().max(1e-8);
            assert!(
                rel <= 1e-3,
                "class {class} channel {k}: alpha {} vs fd {fd_alpha} (rel {rel})",
                alphas[k]
            );
        }
    }
    pass(7, "gradient checks vs central finite differences");
}

/// Criterion 9: with one-hot targets and identical seeds, the epoch-0
/// pre-update loss agrees between cross-entropy and KL within 1e-6.
#[test]
fn criterion_9_loss_identity() {
    let base = ClassifierConfig {
        seed: 51,
        ..ClassifierConfig::for_backbone(Backbone::Toy)
    };
    let ce_model = build_model(ClassifierConfig {
        loss: LossKind::CrossEntropy,
        ..base.clone()
    })
    .unwrap();
    let kl_model = build_model(ClassifierConfig {
        loss: LossKind::KlDivergence,
        ..base
    })
    .unwrap();
    let batch = micro_batch(&ce_model, 1234, 8);
    let ce = ce_model.dataset_loss(&batch);
    let kl = kl_model.dataset_loss(&batch);
    assert!(
        (ce - kl).abs() <= 1e-6,
        "cross-entropy {ce} vs KL {kl} diverge pre-update"
    );
    pass(9, "loss identity at epoch 0");
}
