//! Example-based multi-label metrics and the decision-threshold sweep.
//!
//! For predicted set `P` and ground truth `G` of one sample:
//! precision `|P∩G|/|P|` (0 when `P` is empty), recall `|P∩G|/|G|`,
//! accuracy `|P∩G|/|P∪G|` (Jaccard) and subset accuracy `[P == G]`.
//! Reported values are means over samples.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::classifier::decode_labels;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no samples to evaluate")]
    Empty,
    #[error("sample {index} has an empty ground-truth set")]
    EmptyTruth { index: usize },
    #[error("sample {index} has {found} probabilities, expected {expected}")]
    LengthMismatch { index: usize, expected: usize, found: usize },
    #[error("sample {index} has ground-truth label {label} outside the {labels} model labels")]
    LabelOutOfRange { index: usize, label: usize, labels: usize },
    #[error("invalid sweep range: {0}")]
    Range(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Model output for one promotion and its ground-truth label indices.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSample {
    pub probs: Vec<f64>,
    pub truth: BTreeSet<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub subset_accuracy: f64,
}

/// Metrics over (predicted, truth) set pairs.
///
/// Pairs with an empty truth set stand for spurious predictions: they score
/// 0 precision and 0 accuracy and are left out of the recall mean. Pairs
/// where both sets are empty are ignored.
pub fn set_metrics<T: Ord>(pairs: &[(BTreeSet<T>, BTreeSet<T>)]) -> Result<Metrics, EvalError> {
    let (mut p_sum, mut r_sum, mut a_sum, mut s_sum) = (0.0, 0.0, 0.0, 0.0);
    let (mut n, mut n_recall) = (0usize, 0usize);
    for (pred, truth) in pairs {
        if pred.is_empty() && truth.is_empty() {
            continue;
        }
        let hit = pred.intersection(truth).count() as f64;
        let union = pred.union(truth).count() as f64;
        n += 1;
        if !pred.is_empty() {
            p_sum += hit / pred.len() as f64;
        }
        if !truth.is_empty() {
            r_sum += hit / truth.len() as f64;
            n_recall += 1;
        }
        a_sum += hit / union;
        if pred == truth {
            s_sum += 1.0;
        }
    }
    if n == 0 {
        return Err(EvalError::Empty);
    }
    Ok(Metrics {
        precision: p_sum / n as f64,
        recall: if n_recall == 0 { 0.0 } else { r_sum / n_recall as f64 },
        accuracy: a_sum / n as f64,
        subset_accuracy: s_sum / n as f64,
    })
}

fn validate(samples: &[EvalSample]) -> Result<(), EvalError> {
    let Some(first) = samples.first() else {
        return Err(EvalError::Empty);
    };
    let labels = first.probs.len();
    for (index, s) in samples.iter().enumerate() {
        if s.probs.len() != labels {
            return Err(EvalError::LengthMismatch { index, expected: labels, found: s.probs.len() });
        }
        if s.truth.is_empty() {
            return Err(EvalError::EmptyTruth { index });
        }
        if let Some(&label) = s.truth.iter().find(|&&l| l >= labels) {
            return Err(EvalError::LabelOutOfRange { index, label, labels });
        }
    }
    Ok(())
}

fn metrics_unchecked(samples: &[EvalSample], threshold: f64) -> Metrics {
    let pairs: Vec<(BTreeSet<usize>, BTreeSet<usize>)> =
        samples.iter().map(|s| (decode_labels(&s.probs, threshold).into_iter().collect(), s.truth.clone())).collect();
    set_metrics(&pairs).expect("validated non-empty truth sets")
}

/// Mean metrics with predictions decoded at `threshold`.
pub fn metrics_at(samples: &[EvalSample], threshold: f64) -> Result<Metrics, EvalError> {
    validate(samples)?;
    Ok(metrics_unchecked(samples, threshold))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub points: Vec<SweepPoint>,
    pub best_threshold: f64,
    pub best: Metrics,
}

pub const DEFAULT_SWEEP_STEP: f64 = 0.01;

/// Grid `start, start + step, ...` up to `end` inclusive, rounded to 12
/// decimals so that e.g. the 31st point of a 0.01 grid is exactly 0.3.
pub fn threshold_grid(start: f64, end: f64, step: f64) -> Result<Vec<f64>, EvalError> {
    if !(0.0..=1.0).contains(&start) || !(0.0..=1.0).contains(&end) || start >= end {
        return Err(EvalError::Range(format!("need 0 <= start < end <= 1, got {start}..{end}")));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(EvalError::Range(format!("step must be positive, got {step}")));
    }
    let round = |v: f64| (v * 1e12).round() / 1e12;
    let count = ((end - start) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|i| round(start + i as f64 * step)).filter(|&t| t <= end).collect())
}

/// Metrics at every grid threshold. The best threshold maximizes accuracy;
/// ties go to the smaller threshold.
pub fn threshold_sweep(samples: &[EvalSample], start: f64, end: f64, step: f64) -> Result<EvalReport, EvalError> {
    validate(samples)?;
    let grid = threshold_grid(start, end, step)?;
    let points: Vec<SweepPoint> =
        grid.par_iter().map(|&t| SweepPoint { threshold: t, metrics: metrics_unchecked(samples, t) }).collect();
    let best = points
        .iter()
        .fold(None::<&SweepPoint>, |acc, p| match acc {
            Some(b) if b.metrics.accuracy >= p.metrics.accuracy => Some(b),
            _ => Some(p),
        })
        .expect("grid is non-empty");
    Ok(EvalReport { best_threshold: best.threshold, best: best.metrics, points })
}

/// CSV text: `threshold,precision,recall,accuracy,subset_accuracy`, one row
/// per grid point, four decimals.
pub fn curves_csv(report: &EvalReport) -> String {
    let mut out = String::from("threshold,precision,recall,accuracy,subset_accuracy\n");
    for p in &report.points {
        let m = &p.metrics;
        writeln!(out, "{:.4},{:.4},{:.4},{:.4},{:.4}", p.threshold, m.precision, m.recall, m.accuracy, m.subset_accuracy)
            .expect("write to String");
    }
    out
}

pub fn export_curves(report: &EvalReport, path: &Path) -> Result<(), EvalError> {
    if report.points.is_empty() {
        return Err(EvalError::Empty);
    }
    std::fs::write(path, curves_csv(report)).map_err(|source| EvalError::Io { path: path.display().to_string(), source })
}

/// Aligned `Method  Precision  Recall  Accuracy` table.
pub fn format_summary_table(rows: &[(&str, Metrics)]) -> String {
    let name_w = rows.iter().map(|(n, _)| n.len()).chain(["Method".len()]).max().unwrap_or(6);
    let mut out = format!("{:<name_w$}  {:>9}  {:>9}  {:>9}\n", "Method", "Precision", "Recall", "Accuracy");
    for (name, m) in rows {
        writeln!(out, "{name:<name_w$}  {:>9.4}  {:>9.4}  {:>9.4}", m.precision, m.recall, m.accuracy).expect("write to String");
    }
    out
}
