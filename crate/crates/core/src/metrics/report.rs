use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    binarize, column, confusion_counts, mean_rows, per_class_metrics, roc_auc, warn_missing_auc,
    ClassMetrics,
};
use crate::data::{DiagnosticClass, N_CLASSES};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const HEADER: [&str; 6] = ["class", "Precision", "Recall", "F1", "AUC", "Accuracy"];

/// Nine class rows plus their unweighted mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<ClassMetrics>,
    pub avg: ClassMetrics,
    /// Positive targets per class; empty when unknown (e.g. read back from CSV).
    pub support: Vec<usize>,
    pub thresholds: Option<Vec<f64>>,
}

/// Per-class rows and supports, without the AVG row.
pub(crate) fn class_rows(
    scores: &Tensor,
    targets: &Tensor,
    thresholds: &[f64],
) -> Result<(Vec<ClassMetrics>, Vec<usize>)> {
    let (_, c) = scores.dims2("MetricsReport")?;
    if c != N_CLASSES {
        return Err(Error::InvalidArgument(format!(
            "report needs {N_CLASSES} classes, got {c}"
        )));
    }
    let preds = binarize(scores, thresholds)?;
    let cells = confusion_counts(&preds, targets)?;
    let rows = cells
        .iter()
        .enumerate()
        .map(|(k, cell)| {
            let t: Vec<bool> = column(targets, k).iter().map(|v| *v == 1.0).collect();
            ClassMetrics {
                auc: roc_auc(&column(scores, k), &t),
                ..per_class_metrics(cell)
            }
        })
        .collect();
    Ok((rows, cells.iter().map(|c| c.support()).collect()))
}

/// Mean over classes with at least one positive target; no AUC warning.
pub(crate) fn observed_f1(scores: &Tensor, targets: &Tensor, thresholds: &[f64]) -> Result<f64> {
    let (rows, support) = class_rows(scores, targets, thresholds)?;
    Ok(MetricsReport {
        avg: mean_rows(rows.iter()),
        rows,
        support,
        thresholds: None,
    }
    .observed_avg()
    .f1)
}

impl MetricsReport {
    /// Scores `[N, 9]` against multi-hot targets at the given per-class thresholds.
    pub fn compute(scores: &Tensor, targets: &Tensor, thresholds: &[f64]) -> Result<Self> {
        let (rows, support) = class_rows(scores, targets, thresholds)?;
        warn_missing_auc(&rows);
        Ok(Self::from_rows(rows, support, Some(thresholds.to_vec())))
    }

    pub fn from_rows(
        rows: Vec<ClassMetrics>,
        support: Vec<usize>,
        thresholds: Option<Vec<f64>>,
    ) -> Self {
        let avg = mean_rows(rows.iter());
        Self {
            rows,
            avg,
            support,
            thresholds,
        }
    }

    /// Mean over the classes that have at least one positive target. Equals `avg`
    /// when every class is represented.
    pub fn observed_avg(&self) -> ClassMetrics {
        if self.support.len() != self.rows.len() {
            return self.avg;
        }
        let present: Vec<&ClassMetrics> = self
            .rows
            .iter()
            .zip(&self.support)
            .filter(|(_, s)| **s > 0)
            .map(|(r, _)| r)
            .collect();
        if present.is_empty() {
            return self.avg;
        }
        mean_rows(present.into_iter())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let fmt_row = |name: &str, r: &ClassMetrics| {
            vec![
                name.to_string(),
                format!("{:.6}", r.precision),
                format!("{:.6}", r.recall),
                format!("{:.6}", r.f1),
                r.auc.map_or_else(|| "NA".into(), |a| format!("{a:.6}")),
                format!("{:.6}", r.accuracy),
            ]
        };
        let csv_err = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
        w.write_record(HEADER).map_err(csv_err)?;
        for (k, r) in self.rows.iter().enumerate() {
            let name = DiagnosticClass::from_index(k)
                .map_or_else(|| format!("class{k}"), |c| c.code().into());
            w.write_record(fmt_row(&name, r)).map_err(csv_err)?;
        }
        w.write_record(fmt_row("AVG", &self.avg)).map_err(csv_err)?;
        let bytes = w
            .into_inner()
            .map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()?).map_err(|e| Error::io(path, e))
    }
}

/// Reads a report written by [`MetricsReport::write_csv`].
pub fn read_report_csv(path: &Path) -> Result<MetricsReport> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Parse {
        path: path.into(),
        row: 1,
        message: e.to_string(),
    })?;
    let parse_err = |row: usize, message: String| Error::Parse {
        path: path.into(),
        row,
        message,
    };
    let mut rows = Vec::new();
    let mut avg = None;
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        if rec.len() != HEADER.len() {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", HEADER.len(), rec.len()),
            ));
        }
        let num = |j: usize| {
            rec[j].trim().parse::<f64>().map_err(|_| {
                parse_err(
                    line,
                    format!("column {}: `{}` is not a number", HEADER[j], &rec[j]),
                )
            })
        };
        let row = ClassMetrics {
            precision: num(1)?,
            recall: num(2)?,
            f1: num(3)?,
            auc: if rec[4].trim() == "NA" {
                None
            } else {
                Some(num(4)?)
            },
            accuracy: num(5)?,
        };
        if &rec[0] == "AVG" {
            avg = Some(row);
        } else {
            rows.push(row);
        }
    }
    let avg = avg.ok_or_else(|| parse_err(0, "missing AVG row".into()))?;
    Ok(MetricsReport {
        rows,
        avg,
        support: Vec::new(),
        thresholds: None,
    })
}

/// Unweighted mean of per-round class rows; the AVG row is recomputed from the result.
pub fn aggregate_reports(reports: &[MetricsReport]) -> Result<MetricsReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::InvalidArgument("no reports to aggregate".into()))?;
    let c = first.rows.len();
    if reports.iter().any(|r| r.rows.len() != c) {
        return Err(Error::InvalidArgument(
            "reports differ in class count".into(),
        ));
    }
    let rows = (0..c)
        .map(|k| {
            mean_rows(
                reports
                    .iter()
                    .map(|r| &r.rows[k])
                    .collect::<Vec<_>>()
                    .into_iter(),
            )
        })
        .collect();
    let support = if reports.iter().all(|r| r.support.len() == c) {
        (0..c)
            .map(|k| reports.iter().map(|r| r.support[k]).sum())
            .collect()
    } else {
        Vec::new()
    };
    Ok(MetricsReport::from_rows(rows, support, None))
}
