//! Multi-label classification metrics: per-class confusion cells, precision,
//! recall, F1, accuracy, exact ROC AUC, unweighted class averages, and the
//! row-normalized confusion matrices.

mod confusion;
mod report;

pub use confusion::{multilabel_confusion_matrix, render_confusion_svg, RateMatrix};
pub(crate) use report::observed_f1;
pub use report::{aggregate_reports, read_report_csv, MetricsReport};

use serde::{Deserialize, Serialize};

use crate::data::{DiagnosticClass, N_CLASSES};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCells {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl ConfusionCells {
    pub fn n(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// Number of positive targets.
    pub fn support(&self) -> usize {
        self.tp + self.fn_
    }
}

/// One row of a report.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Absent when the targets hold a single class.
    pub auc: Option<f64>,
    pub accuracy: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// F1 from cell counts; 0 when there is nothing to score.
pub fn f1_score(tp: usize, fp: usize, fn_: usize) -> f64 {
    ratio(2 * tp, 2 * tp + fp + fn_)
}

fn binary(t: &Tensor, what: &str) -> Result<Vec<bool>> {
    t.data()
        .iter()
        .map(|v| match *v {
            0.0 => Ok(false),
            1.0 => Ok(true),
            other => Err(Error::InvalidArgument(format!(
                "{what} must be 0/1, found {other}"
            ))),
        })
        .collect()
}

/// Per-class confusion cells for binary `[N, C]` predictions and targets.
pub fn confusion_counts(preds: &Tensor, targets: &Tensor) -> Result<Vec<ConfusionCells>> {
    let (n, c) = preds.dims2("confusion_counts")?;
    if targets.shape() != preds.shape() {
        return Err(Error::Shape {
            op: "confusion_counts",
            message: format!("preds {:?} vs targets {:?}", preds.shape(), targets.shape()),
        });
    }
    let p = binary(preds, "predictions")?;
    let t = binary(targets, "targets")?;
    let mut cells = vec![ConfusionCells::default(); c];
    for i in 0..n {
        for (k, cell) in cells.iter_mut().enumerate() {
            match (p[i * c + k], t[i * c + k]) {
                (true, true) => cell.tp += 1,
                (true, false) => cell.fp += 1,
                (false, true) => cell.fn_ += 1,
                (false, false) => cell.tn += 1,
            }
        }
    }
    Ok(cells)
}

/// Precision, recall, F1 and accuracy; every 0/0 is taken as 0. AUC is left unset.
pub fn per_class_metrics(cells: &ConfusionCells) -> ClassMetrics {
    let precision = ratio(cells.tp, cells.tp + cells.fp);
    let recall = ratio(cells.tp, cells.tp + cells.fn_);
    ClassMetrics {
        precision,
        recall,
        f1: if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        },
        auc: None,
        accuracy: ratio(cells.tp + cells.tn, cells.n()),
    }
}

/// Mann–Whitney estimate of ROC AUC with ties counted half, via mid-ranks.
/// `None` when the targets contain only one class.
pub fn roc_auc(scores: &[f64], targets: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), targets.len(), "roc_auc: length mismatch");
    let n_pos = targets.iter().filter(|t| **t).count();
    let n_neg = targets.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the rank sum keeps mid-ranks integral.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let twice_mid = (i + 1 + j + 1) as u128;
        let pos_in_run = order[i..=j].iter().filter(|&&k| targets[k]).count() as u128;
        twice_rank_sum += twice_mid * pos_in_run;
        i = j + 1;
    }
    let (p, q) = (n_pos as u128, n_neg as u128);
    let twice_u = twice_rank_sum - p * (p + 1);
    Some(twice_u as f64 / (2 * p * q) as f64)
}

/// Unweighted mean over the class rows. AUC is averaged over the classes where it is
/// defined; missing values are reported through `log`.
pub fn average_metrics(rows: &[ClassMetrics]) -> Result<ClassMetrics> {
    if rows.len() != N_CLASSES {
        return Err(Error::InvalidArgument(format!(
            "average needs {N_CLASSES} class rows, got {}",
            rows.len()
        )));
    }
    warn_missing_auc(rows);
    Ok(mean_rows(rows.iter()))
}

pub(crate) fn warn_missing_auc(rows: &[ClassMetrics]) {
    let missing: Vec<&str> = rows
        .iter()
        .zip(DiagnosticClass::ALL)
        .filter(|(r, _)| r.auc.is_none())
        .map(|(_, c)| c.code())
        .collect();
    if !missing.is_empty() {
        log::warn!(
            "AUC undefined for {} (single-class targets); excluded from the average",
            missing.join(", ")
        );
    }
}

pub(crate) fn mean_rows<'a>(rows: impl Iterator<Item = &'a ClassMetrics> + Clone) -> ClassMetrics {
    let n = rows.clone().count().max(1) as f64;
    let mean = |f: fn(&ClassMetrics) -> f64| {
        let vals: Vec<f64> = rows.clone().map(f).collect();
        shifted_mean(&vals, n)
    };
    let aucs: Vec<f64> = rows.clone().filter_map(|r| r.auc).collect();
    ClassMetrics {
        precision: mean(|r| r.precision),
        recall: mean(|r| r.recall),
        f1: mean(|r| r.f1),
        auc: (!aucs.is_empty()).then(|| shifted_mean(&aucs, aucs.len() as f64)),
        accuracy: mean(|r| r.accuracy),
    }
}

/// Mean taken relative to the first value, so constant inputs average exactly.
fn shifted_mean(vals: &[f64], n: f64) -> f64 {
    match vals.first() {
        None => 0.0,
        Some(&x0) => x0 + vals.iter().map(|v| v - x0).sum::<f64>() / n,
    }
}

/// Positive iff `score >= threshold`, per class.
pub fn binarize(scores: &Tensor, thresholds: &[f64]) -> Result<Tensor> {
    let (_, c) = scores.dims2("binarize")?;
    if thresholds.len() != c {
        return Err(Error::InvalidArgument(format!(
            "{} thresholds for {c} classes",
            thresholds.len()
        )));
    }
    Ok(Tensor::from_fn(scores.shape().to_vec(), |i| {
        f64::from(u8::from(scores.data()[i] >= thresholds[i % c]))
    }))
}

/// Column `k` of a `[N, C]` tensor.
pub(crate) fn column(t: &Tensor, k: usize) -> Vec<f64> {
    let c = t.shape()[1];
    t.data().iter().skip(k).step_by(c).copied().collect()
}

#[cfg(test)]
mod tests;
