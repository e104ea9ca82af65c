//! `facecut-pipeline`: one entry point wiring dataset scanning, face
//! cutting, splitting, training, evaluation, Grad-CAM and reporting.
//!
//! Exit codes: 0 on success, 2 for usage errors, 1 for anything else.
//! Diagnostics go to standard error; machine-readable output only to the
//! files named by flags.

pub mod config;
pub mod report;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use image::Rgb;

use facecut_core::classifier::{build_model, parse_history, train as train_model, TrainedModel};
use facecut_core::dataset::{
    preprocess_dataset, read_manifest, scan_dataset, split_dataset, write_manifest, Split,
};
use facecut_core::explain::{compute_cam, heatmap_image, overlay};
use facecut_core::facecut::{
    render_boundary_overlay, select_boundary_points, CutOptions, FacePolicy, NoFacePolicy,
};
use facecut_core::landmarks::predictor::PredictorProvider;
use facecut_core::landmarks::sidecar::SidecarProvider;
use facecut_core::landmarks::{FaceImage, LandmarkProvider};
use facecut_core::metrics::{evaluate, read_report, write_report};

use config::{BackboneArg, FacesArg, LossArg, NoFaceArg, PipelineConfig, ProviderKind};

pub const PREDICTOR_PATH_ENV: &str = "FACECUT_PREDICTOR_PATH";

#[derive(Debug, Parser)]
#[command(
    name = "facecut-pipeline",
    version,
    about = "Face-mask classification with boundary-dependent face-cut preprocessing"
)]
struct Cli {
    /// Configuration file (TOML). Command-line flags override file values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Scan a class-per-directory dataset into a manifest CSV.
    Scan {
        /// Dataset root containing `with_mask/` and `without_mask/`.
        #[arg(long, value_name = "DIR")]
        root: PathBuf,
        /// Manifest CSV to write.
        #[arg(long, value_name = "CSV")]
        out: PathBuf,
    },
    /// Assign stratified train/val/test splits to a manifest.
    Split {
        #[arg(long, value_name = "CSV")]
        manifest: PathBuf,
        #[arg(long, value_name = "CSV")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Three comma-separated fractions, e.g. 0.6,0.2,0.2.
        #[arg(long, value_parser = parse_ratios)]
        ratios: Option<[f64; 3]>,
    },
    /// Cut the face region out of every image in a dataset.
    Cut {
        #[arg(long, value_name = "DIR")]
        input_dir: PathBuf,
        #[arg(long, value_name = "DIR")]
        output_dir: PathBuf,
        /// Landmark provider.
        #[arg(long, value_enum)]
        landmarks: Option<ProviderKind>,
        /// What to do when no face is found.
        #[arg(long, value_enum)]
        no_face: Option<NoFaceArg>,
        /// Process the largest face or all faces.
        #[arg(long, value_enum)]
        faces: Option<FacesArg>,
        /// Include jaw point 0 in the boundary (28 points instead of 27).
        #[arg(long)]
        include_point_zero: bool,
        /// Fill color outside the face polygon, e.g. 0,0,0.
        #[arg(long, value_parser = parse_fill)]
        fill: Option<[u8; 3]>,
        /// Also write boundary-marker overlays under <output-dir>/debug.
        #[arg(long)]
        debug_overlay: bool,
    },
    /// Train the classifier on a split manifest.
    Train {
        #[arg(long, value_name = "CSV")]
        manifest: PathBuf,
        #[arg(long, value_enum)]
        backbone: Option<BackboneArg>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, value_enum)]
        loss: Option<LossArg>,
        #[arg(long)]
        seed: Option<u64>,
        /// Model directory to write (config.json, history.csv, weights.bin).
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Evaluate a trained model on the manifest's test split.
    Eval {
        #[arg(long, value_name = "CSV")]
        manifest: PathBuf,
        /// Model directory written by `train`.
        #[arg(long, value_name = "DIR")]
        model: PathBuf,
        /// Report JSON to write.
        #[arg(long, value_name = "JSON")]
        report: PathBuf,
    },
    /// Grad-CAM heatmap and overlay for one image.
    Gradcam {
        #[arg(long, value_name = "DIR")]
        model: PathBuf,
        #[arg(long, value_name = "IMAGE")]
        image: PathBuf,
        /// Target class name (e.g. with_mask).
        #[arg(long)]
        class: String,
        /// Blend factor in [0, 1].
        #[arg(long)]
        alpha: Option<f64>,
        /// Overlay PNG to write; the raw heatmap lands alongside it.
        #[arg(long, value_name = "PNG")]
        out: PathBuf,
    },
    /// Render training curves and a summary table from saved outputs.
    Report {
        /// history.csv written by `train`.
        #[arg(long, value_name = "CSV")]
        history: PathBuf,
        /// Report JSON written by `eval`.
        #[arg(long, value_name = "JSON")]
        metrics: PathBuf,
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
    },
}

fn parse_ratios(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!(
            "expected three comma-separated ratios, got {}",
            parts.len()
        ));
    }
    let mut out = [0.0f64; 3];
    for (slot, part) in out.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse()
            .map_err(|_| format!("invalid ratio `{part}`"))?;
    }
    Ok(out)
}

fn parse_fill(s: &str) -> Result<[u8; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!(
            "expected R,G,B with three components, got {}",
            parts.len()
        ));
    }
    let mut out = [0u8; 3];
    for (slot, part) in out.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse()
            .map_err(|_| format!("invalid channel `{part}`"))?;
    }
    Ok(out)
}

/// Parse and dispatch; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = err.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err:#}");
            1
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let config = PipelineConfig::load_opt(cli.config.as_deref())?;
    match cli.command {
        Command::Scan { root, out } => cmd_scan(&root, &out),
        Command::Split {
            manifest,
            out,
            seed,
            ratios,
        } => cmd_split(&config, &manifest, &out, seed, ratios),
        Command::Cut {
            input_dir,
            output_dir,
            landmarks,
            no_face,
            faces,
            include_point_zero,
            fill,
            debug_overlay,
        } => cmd_cut(
            &config,
            &input_dir,
            &output_dir,
            landmarks,
            no_face,
            faces,
            include_point_zero,
            fill,
            debug_overlay,
        ),
        Command::Train {
            manifest,
            backbone,
            epochs,
            loss,
            seed,
            out,
        } => cmd_train(&config, &manifest, backbone, epochs, loss, seed, &out),
        Command::Eval {
            manifest,
            model,
            report,
        } => cmd_eval(&manifest, &model, &report),
        Command::Gradcam {
            model,
            image,
            class,
            alpha,
            out,
        } => cmd_gradcam(&config, &model, &image, &class, alpha, &out),
        Command::Report {
            history,
            metrics,
            out_dir,
        } => cmd_report(&history, &metrics, &out_dir),
    }
}

fn cmd_scan(root: &Path, out: &Path) -> anyhow::Result<()> {
    let manifest = scan_dataset(root)?;
    write_manifest(&manifest, out)?;
    let counts = manifest.class_counts();
    log::info!(
        "scanned {} samples ({})",
        manifest.records.len(),
        counts
            .iter()
            .map(|(k, v)| format!("{k}: {v}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    Ok(())
}

fn cmd_split(
    config: &PipelineConfig,
    manifest_path: &Path,
    out: &Path,
    seed: Option<u64>,
    ratios: Option<[f64; 3]>,
) -> anyhow::Result<()> {
    let manifest = read_manifest(manifest_path)?;
    let seed = seed.or(config.dataset.seed).unwrap_or(42);
    let [a, b, c] = ratios
        .or(config.dataset.ratios)
        .unwrap_or([0.6, 0.2, 0.2]);
    let split = split_dataset(&manifest, seed, (a, b, c))?;
    write_manifest(&split, out)?;
    Ok(())
}

fn resolve_provider(
    config: &PipelineConfig,
    flag: Option<ProviderKind>,
) -> anyhow::Result<Box<dyn LandmarkProvider>> {
    let kind = flag
        .or(config.landmarks.provider)
        .unwrap_or(ProviderKind::Sidecar);
    match kind {
        ProviderKind::Sidecar => Ok(Box::new(SidecarProvider::new())),
        ProviderKind::Predictor => {
            let path = config
                .landmarks
                .predictor_path
                .clone()
                .or_else(|| std::env::var_os(PREDICTOR_PATH_ENV).map(PathBuf::from));
            let Some(path) = path else {
                bail!(
                    "predictor provider needs `landmarks.predictor_path` in the config \
                     or the {PREDICTOR_PATH_ENV} environment variable"
                );
            };
            Ok(Box::new(PredictorProvider::from_file(&path)?))
        }
    }
}

fn cut_options(
    config: &PipelineConfig,
    no_face: Option<NoFaceArg>,
    faces: Option<FacesArg>,
    include_point_zero: bool,
    fill: Option<[u8; 3]>,
) -> CutOptions {
    let no_face = match no_face.or(config.facecut.no_face).unwrap_or(NoFaceArg::Skip) {
        NoFaceArg::Skip => NoFacePolicy::Skip,
        NoFaceArg::Passthrough => NoFacePolicy::Passthrough,
        NoFaceArg::Error => NoFacePolicy::Error,
    };
    let faces = match faces.or(config.facecut.faces).unwrap_or(FacesArg::Largest) {
        FacesArg::Largest => FacePolicy::Largest,
        FacesArg::All => FacePolicy::All,
    };
    let include_point_zero =
        include_point_zero || config.facecut.include_point_zero.unwrap_or(false);
    let fill = fill.or(config.facecut.fill).unwrap_or([0, 0, 0]);
    CutOptions {
        faces,
        no_face,
        include_point_zero,
        fill: Rgb(fill),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_cut(
    config: &PipelineConfig,
    input_dir: &Path,
    output_dir: &Path,
    landmarks: Option<ProviderKind>,
    no_face: Option<NoFaceArg>,
    faces: Option<FacesArg>,
    include_point_zero: bool,
    fill: Option<[u8; 3]>,
    debug_overlay: bool,
) -> anyhow::Result<()> {
    let provider = resolve_provider(config, landmarks)?;
    let options = cut_options(config, no_face, faces, include_point_zero, fill);
    let manifest = scan_dataset(input_dir)?;
    let derived = preprocess_dataset(&manifest, provider.as_ref(), &options, output_dir)?;
    write_manifest(&derived, &output_dir.join("manifest.csv"))?;
    let cut_count = derived.records.iter().filter(|r| r.face_found).count();
    log::info!(
        "cut {cut_count}/{} samples into {}",
        derived.records.len(),
        output_dir.display()
    );

    if debug_overlay {
        for rec in &manifest.records {
            let image = FaceImage::from_file(&rec.path)?;
            let boxes = provider.detect_faces(&image)?;
            let Some(face) = boxes.first() else { continue };
            let set = provider.detect_landmarks(&image, face)?;
            let path = select_boundary_points(&set, options.include_point_zero);
            let overlay_img = render_boundary_overlay(&image.pixels, &path);
            let debug_dir = output_dir.join("debug").join(rec.label.dir_name());
            std::fs::create_dir_all(&debug_dir)
                .with_context(|| format!("cannot create {}", debug_dir.display()))?;
            let stem = rec
                .path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "sample".into());
            let out = debug_dir.join(format!("{stem}.overlay.png"));
            overlay_img
                .save(&out)
                .with_context(|| format!("cannot write {}", out.display()))?;
        }
    }
    Ok(())
}

fn cmd_train(
    config: &PipelineConfig,
    manifest_path: &Path,
    backbone: Option<BackboneArg>,
    epochs: Option<usize>,
    loss: Option<LossArg>,
    seed: Option<u64>,
    out: &Path,
) -> anyhow::Result<()> {
    let manifest = read_manifest(manifest_path)?;
    let fill = config.facecut.fill.unwrap_or([0, 0, 0]);
    let mut section = config.classifier.clone();
    section.backbone = backbone.or(section.backbone);
    section.epochs = epochs.or(section.epochs);
    section.loss = loss.or(section.loss);
    section.seed = seed.or(section.seed);
    let merged = PipelineConfig {
        classifier: section,
        ..config.clone()
    };
    let classifier_config = merged.classifier_config(fill);

    let model = build_model(classifier_config)?;
    let trained = train_model(model, &manifest)?;
    trained.save(out)?;
    if let Some(last) = trained.history.last() {
        log::info!(
            "trained {} epochs: val_loss {:.4} val_acc {:.4}; model in {}",
            trained.history.len(),
            last.val_loss,
            last.val_acc,
            out.display()
        );
    }
    Ok(())
}

fn cmd_eval(manifest_path: &Path, model_dir: &Path, report_path: &Path) -> anyhow::Result<()> {
    let manifest = read_manifest(manifest_path)?;
    let model = TrainedModel::load(model_dir)?;
    let (_, report) = evaluate(&model, &manifest, Split::Test)?;
    write_report(&report, report_path)?;
    log::info!(
        "test accuracy {:.4}, acsa {}",
        report.accuracy,
        report
            .acsa
            .map(|v| format!("{v:.4}"))
            .unwrap_or_else(|| "n/a".into())
    );
    Ok(())
}

fn cmd_gradcam(
    config: &PipelineConfig,
    model_dir: &Path,
    image_path: &Path,
    class: &str,
    alpha: Option<f64>,
    out: &Path,
) -> anyhow::Result<()> {
    let trained = TrainedModel::load(model_dir)?;
    let image = facecut_core::imgproc::load_rgb(image_path)?;
    let class_idx = trained.model.class_index(class)?;
    let alpha = alpha.or(config.report.alpha).unwrap_or(0.4);
    let cam = compute_cam(&trained.model, &image, class_idx)?;
    // The CAM lives at model-input resolution; overlay onto the letterboxed
    // input so heatmap and pixels align.
    let side = trained.model.config.image_size.0 as u32;
    let (canvas, _) = facecut_core::imgproc::letterbox(
        &image,
        side,
        Rgb(trained.model.config.pad_fill),
    );
    let blended = overlay(&cam, &canvas, alpha)?;
    blended
        .save(out)
        .with_context(|| format!("cannot write {}", out.display()))?;
    let heat_path = heatmap_path(out);
    heatmap_image(&cam)
        .save(&heat_path)
        .with_context(|| format!("cannot write {}", heat_path.display()))?;
    log::info!(
        "wrote {} and {} (class {class}, alpha {alpha})",
        out.display(),
        heat_path.display()
    );
    Ok(())
}

fn heatmap_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "overlay".into());
    out.with_file_name(format!("{stem}.heatmap.png"))
}

fn cmd_report(history_path: &Path, metrics_path: &Path, out_dir: &Path) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(history_path)
        .with_context(|| format!("cannot read {}", history_path.display()))?;
    let history = parse_history(&text, history_path)?;
    let metrics = read_report(metrics_path)?;
    report::plot_history(&history, out_dir)?;
    let summary = report::summary_text(&metrics);
    let summary_path = out_dir.join("summary.txt");
    std::fs::write(&summary_path, summary)
        .with_context(|| format!("cannot write {}", summary_path.display()))?;
    log::info!("wrote curves and summary to {}", out_dir.display());
    Ok(())
}
