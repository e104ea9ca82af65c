//! Training-curve plots and the plain-text summary table.

use std::path::Path;

use anyhow::Context;
use plotters::prelude::*;

use facecut_core::classifier::EpochStats;
use facecut_core::metrics::MetricsReport;

/// Draw loss and accuracy curves (train and validation, one point per
/// epoch) as `loss.svg` and `accuracy.svg` under `out_dir`.
pub fn plot_history(history: &[EpochStats], out_dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create {}", out_dir.display()))?;
    let losses: Vec<(f64, f64)> = history
        .iter()
        .enumerate()
        .map(|(i, s)| ((i + 1) as f64, s.train_loss))
        .collect();
    let val_losses: Vec<(f64, f64)> = history
        .iter()
        .enumerate()
        .map(|(i, s)| ((i + 1) as f64, s.val_loss))
        .collect();
    plot_series(
        &out_dir.join("loss.svg"),
        "Loss",
        "loss",
        &losses,
        &val_losses,
    )?;

    let accs: Vec<(f64, f64)> = history
        .iter()
        .enumerate()
        .map(|(i, s)| ((i + 1) as f64, s.train_acc))
        .collect();
    let val_accs: Vec<(f64, f64)> = history
        .iter()
        .enumerate()
        .map(|(i, s)| ((i + 1) as f64, s.val_acc))
        .collect();
    plot_series(
        &out_dir.join("accuracy.svg"),
        "Accuracy",
        "accuracy",
        &accs,
        &val_accs,
    )
}

fn plot_series(
    path: &Path,
    title: &str,
    y_label: &str,
    train: &[(f64, f64)],
    val: &[(f64, f64)],
) -> anyhow::Result<()> {
    let y_max = train
        .iter()
        .chain(val)
        .map(|&(_, y)| y)
        .fold(f64::MIN, f64::max)
        .max(1e-6);
    let x_max = train.len() as f64;
    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| anyhow::anyhow!("{e}"))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 24))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(0.5..x_max + 0.5, 0.0..y_max * 1.1)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    chart
        .configure_mesh()
        .x_desc("epoch")
        .y_desc(y_label)
        .draw()
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    for (points, color, name) in [(train, &BLUE, "train"), (val, &RED, "validation")] {
        chart
            .draw_series(LineSeries::new(points.iter().copied(), color))
            .map_err(|e| anyhow::anyhow!("{e}"))?
            .label(name)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
        chart
            .draw_series(
                points
                    .iter()
                    .map(|&(x, y)| Circle::new((x, y), 3, color.filled())),
            )
            .map_err(|e| anyhow::anyhow!("{e}"))?;
    }
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE.mix(0.8))
        .draw()
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    root.present().map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(())
}

fn fmt_opt(value: Option<f64>, decimals: usize) -> String {
    match value {
        Some(v) => format!("{v:.decimals$}"),
        None => "n/a".to_string(),
    }
}

/// Render the report as a plain-text summary: a precision/recall/F1 table, a
/// class-accuracy/ACSA/PPV table and a compact key-value block.
pub fn summary_text(report: &MetricsReport) -> String {
    let mut out = String::new();
    let name_width = report
        .class_names
        .iter()
        .map(|n| n.len())
        .max()
        .unwrap_or(0)
        .max("Weighted Average".len())
        + 2;

    out.push_str(&format!(
        "{:<name_width$}{:>10}{:>8}{:>10}{:>9}\n",
        "Class", "Precision", "Recall", "F1-Score", "Support"
    ));
    let total_support: u64 = report.support.iter().sum();
    for (i, name) in report.class_names.iter().enumerate() {
        out.push_str(&format!(
            "{:<name_width$}{:>10}{:>8}{:>10}{:>9}\n",
            name,
            fmt_opt(report.precision[i], 2),
            fmt_opt(report.recall[i], 2),
            fmt_opt(report.f1[i], 2),
            report.support[i]
        ));
    }
    out.push('\n');
    out.push_str(&format!(
        "{:<name_width$}{:>10}{:>8}{:>10}{:>9}\n",
        "Accuracy",
        "",
        "",
        format!("{:.2}", report.accuracy),
        total_support
    ));
    out.push_str(&format!(
        "{:<name_width$}{:>10}{:>8}{:>10}{:>9}\n",
        "Macro Average",
        fmt_opt(report.macro_avg.precision, 2),
        fmt_opt(report.macro_avg.recall, 2),
        fmt_opt(report.macro_avg.f1, 2),
        total_support
    ));
    out.push_str(&format!(
        "{:<name_width$}{:>10}{:>8}{:>10}{:>9}\n",
        "Weighted Average",
        fmt_opt(report.weighted_avg.precision, 2),
        fmt_opt(report.weighted_avg.recall, 2),
        fmt_opt(report.weighted_avg.f1, 2),
        total_support
    ));

    out.push('\n');
    out.push_str(&format!("{:<16}", "Parameter"));
    for name in &report.class_names {
        out.push_str(&format!("{:>w$}", name, w = name_width.max(14)));
    }
    out.push_str(&format!("{:>10}\n", "Average"));
    out.push_str(&format!("{:<16}", "Class Accuracy"));
    for v in &report.class_accuracy {
        out.push_str(&format!("{:>w$}", fmt_opt(*v, 4), w = name_width.max(14)));
    }
    out.push('\n');
    out.push_str(&format!("{:<16}", "ACSA"));
    for _ in &report.class_names {
        out.push_str(&format!("{:>w$}", "", w = name_width.max(14)));
    }
    out.push_str(&format!("{:>10}\n", fmt_opt(report.acsa, 4)));
    out.push_str(&format!("{:<16}", "PPV"));
    for v in &report.ppv {
        out.push_str(&format!("{:>w$}", fmt_opt(*v, 4), w = name_width.max(14)));
    }
    out.push('\n');

    out.push('\n');
    out.push_str(&format!("accuracy {:.4}\n", report.accuracy));
    out.push_str(&format!("acsa {}\n", fmt_opt(report.acsa, 4)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use facecut_core::metrics::{compute_metrics, reference_confusion_matrix};

    #[test]
    fn summary_contains_reference_acsa() {
        let report = compute_metrics(&reference_confusion_matrix());
        let text = summary_text(&report);
        assert!(text.contains("acsa 0.9911"), "{text}");
        assert!(text.contains("accuracy 0.9911"), "{text}");
        assert!(text.contains("2084"));
        assert!(text.contains("Weighted Average"));
    }

    #[test]
    fn curves_have_one_marker_per_epoch() {
        let dir = tempfile::TempDir::new().unwrap();
        let history: Vec<EpochStats> = (0..10)
            .map(|i| EpochStats {
                train_loss: 1.0 / (i + 1) as f64,
                train_acc: 0.5 + 0.05 * i as f64,
                val_loss: 1.2 / (i + 1) as f64,
                val_acc: 0.45 + 0.05 * i as f64,
            })
            .collect();
        plot_history(&history, dir.path()).unwrap();
        for name in ["loss.svg", "accuracy.svg"] {
            let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
            let circles = text.matches("<circle").count();
            assert_eq!(circles, 20, "{name}: two series x ten epochs");
        }
    }
}
