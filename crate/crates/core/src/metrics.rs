//! Confusion-matrix evaluation: per-class accuracy, its mean (ACSA), PPV,
//! precision/recall/F1 and supports.
//!
//! Rates are computed and stored at full double precision; rounding is a
//! presentation concern. A class with a zero row sum has undefined recall
//! (and a zero column sum undefined PPV); such entries are reported as
//! flagged nulls and excluded from the macro and weighted averages rather
//! than coerced to 0.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::TrainedModel;
use crate::dataset::{DatasetManifest, Split};
use crate::error::{Error, Result};

/// Square matrix of counts: rows are true classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
    class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn from_counts<S: AsRef<str>>(counts: Vec<Vec<u64>>, class_names: &[S]) -> Result<Self> {
        let n = class_names.len();
        if n < 2 {
            return Err(Error::Input("confusion matrix needs at least 2 classes".into()));
        }
        if counts.len() != n || counts.iter().any(|row| row.len() != n) {
            return Err(Error::Input(format!("confusion matrix must be {n}x{n}")));
        }
        Ok(Self {
            counts,
            class_names: class_names.iter().map(|s| s.as_ref().to_string()).collect(),
        })
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|row| row[j]).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }
}

/// Count `(true, predicted)` label pairs into a confusion matrix.
pub fn confusion<S: AsRef<str>>(
    true_labels: &[S],
    predicted_labels: &[S],
    class_names: &[S],
) -> Result<ConfusionMatrix> {
    if true_labels.len() != predicted_labels.len() {
        return Err(Error::Input(format!(
            "label sequences differ in length: {} vs {}",
            true_labels.len(),
            predicted_labels.len()
        )));
    }
    if true_labels.is_empty() {
        return Err(Error::Input("label sequences are empty".into()));
    }
    let n = class_names.len();
    let index = |label: &S| -> Result<usize> {
        class_names
            .iter()
            .position(|c| c.as_ref() == label.as_ref())
            .ok_or_else(|| Error::Label(label.as_ref().to_string()))
    };
    let mut counts = vec![vec![0u64; n]; n];
    for (t, p) in true_labels.iter().zip(predicted_labels) {
        counts[index(t)?][index(p)?] += 1;
    }
    ConfusionMatrix::from_counts(counts, class_names)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

/// Full evaluation report; field order matches the serialized schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub class_names: Vec<String>,
    pub confusion_matrix: Vec<Vec<u64>>,
    pub accuracy: f64,
    pub class_accuracy: Vec<Option<f64>>,
    pub acsa: Option<f64>,
    pub ppv: Vec<Option<f64>>,
    pub precision: Vec<Option<f64>>,
    pub recall: Vec<Option<f64>>,
    pub f1: Vec<Option<f64>>,
    pub support: Vec<u64>,
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
}

/// Derive every rate from the matrix: per-class accuracy is the diagonal
/// over the row sum, ACSA its mean, PPV the diagonal over the column sum;
/// precision = PPV, recall = class accuracy, F1 their harmonic mean, and
/// accuracy the trace over the total.
pub fn compute_metrics(cm: &ConfusionMatrix) -> MetricsReport {
    let n = cm.class_names().len();
    let support: Vec<u64> = (0..n).map(|i| cm.row_sum(i)).collect();

    let class_accuracy: Vec<Option<f64>> = (0..n)
        .map(|i| {
            let row = cm.row_sum(i);
            (row > 0).then(|| cm.counts[i][i] as f64 / row as f64)
        })
        .collect();
    let ppv: Vec<Option<f64>> = (0..n)
        .map(|j| {
            let col = cm.col_sum(j);
            (col > 0).then(|| cm.counts[j][j] as f64 / col as f64)
        })
        .collect();
    let acsa = mean_defined(&class_accuracy);

    let precision = ppv.clone();
    let recall = class_accuracy.clone();
    let f1: Vec<Option<f64>> = precision
        .iter()
        .zip(&recall)
        .map(|(p, r)| match (p, r) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            (Some(_), Some(_)) => Some(0.0),
            _ => None,
        })
        .collect();

    let accuracy = cm.trace() as f64 / cm.total() as f64;
    let macro_avg = Averages {
        precision: mean_defined(&precision),
        recall: mean_defined(&recall),
        f1: mean_defined(&f1),
    };
    let weighted_avg = Averages {
        precision: weighted_mean_defined(&precision, &support),
        recall: weighted_mean_defined(&recall, &support),
        f1: weighted_mean_defined(&f1, &support),
    };

    MetricsReport {
        class_names: cm.class_names().to_vec(),
        confusion_matrix: cm.counts().to_vec(),
        accuracy,
        class_accuracy,
        acsa,
        ppv,
        precision,
        recall,
        f1,
        support,
        macro_avg,
        weighted_avg,
    }
}

fn mean_defined(values: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = values.iter().filter_map(|v| *v).collect();
    if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

fn weighted_mean_defined(values: &[Option<f64>], weights: &[u64]) -> Option<f64> {
    let mut sum = 0.0;
    let mut weight_sum = 0u64;
    for (v, &w) in values.iter().zip(weights) {
        if let Some(v) = v {
            sum += v * w as f64;
            weight_sum += w;
        }
    }
    (weight_sum > 0).then(|| sum / weight_sum as f64)
}

/// Predict the manifest's `split` records and evaluate them.
pub fn evaluate(
    model: &TrainedModel,
    manifest: &DatasetManifest,
    split: Split,
) -> Result<(ConfusionMatrix, MetricsReport)> {
    let records: Vec<_> = manifest.records_in(split).filter(|r| r.has_file()).collect();
    if records.is_empty() {
        return Err(Error::Data(format!("{} split is empty", split.as_str())));
    }
    let class_names = model.model.class_names.clone();
    let mut true_labels = Vec::with_capacity(records.len());
    let mut predicted = Vec::with_capacity(records.len());
    for rec in records {
        let probs = model.model.predict_path(&rec.path)?;
        true_labels.push(rec.label.dir_name().to_string());
        predicted.push(class_names[probs.argmax()].clone());
    }
    let cm = confusion(&true_labels, &predicted, &class_names)?;
    let report = compute_metrics(&cm);
    Ok((cm, report))
}

/// Serialize the report as pretty JSON to `path`.
pub fn write_report(report: &MetricsReport, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Data(format!("serialize report: {e}")))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_report(path: &Path) -> Result<MetricsReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// The reference confusion matrix the evaluation checks pin their
/// expected rates against.
pub fn reference_confusion_matrix() -> ConfusionMatrix {
    ConfusionMatrix::from_counts(
        vec![vec![2058, 26], vec![11, 2048]],
        &["without_mask", "with_mask"],
    )
    .expect("valid 2x2 matrix")
}
