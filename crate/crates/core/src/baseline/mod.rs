//! Expert-feature baselines: statistical and wavelet features, and the
//! logistic-regression and MLP classifiers trained on them.

mod features;
mod models;
mod wavelet;

pub use features::{
    feature_matrix, percentile, shannon_entropy, statistical_features, wavelet_features,
    write_features_csv, FeatureVector, PERCENTILES,
};
pub use models::{
    logistic_loss_and_grad, BaselineClassifier, BaselineParams, BaselineRegistry, LogisticBaseline,
    MlpBaseline, Standardizer,
};
pub use wavelet::{dwt, Db4, Haar, Wavelet, WaveletRegistry};

use std::collections::HashMap;
use std::path::Path;

use crate::data::{DiagnosticClass, N_CLASSES};
use crate::error::{Error, Result};
use crate::metrics::{aggregate_reports, MetricsReport};
use crate::tensor::Tensor;
use crate::train::{make_folds, select_thresholds};

pub const DEFAULT_WAVELET: &str = "db4";
pub const DEFAULT_LEVELS: usize = 4;

/// Rows `rows` of a `[N, F]` matrix.
pub fn take_rows(t: &Tensor, rows: &[usize]) -> Result<Tensor> {
    let (_, f) = t.dims2("take_rows")?;
    let mut data = Vec::with_capacity(rows.len() * f);
    for &r in rows {
        data.extend_from_slice(&t.data()[r * f..(r + 1) * f]);
    }
    Tensor::new([rows.len(), f], data)
}

#[derive(Clone, Debug)]
pub struct BaselineCv {
    pub model: String,
    pub reports: Vec<(usize, MetricsReport)>,
    pub aggregate: MetricsReport,
    /// Test-fold scores per record, in record order of the rounds run.
    pub scores: Vec<(String, Vec<f64>)>,
}

/// Runs the fold protocol for one baseline: fit on the training folds, pick thresholds
/// on the validation fold, report on the test fold. Folds match
/// [`crate::train::cross_validate`] for the same ids and seed.
#[allow(clippy::too_many_arguments)]
pub fn run_baseline_cv(
    ids: &[&str],
    features: &Tensor,
    targets: &Tensor,
    model: &str,
    registry: &BaselineRegistry,
    params: &BaselineParams,
    folds: usize,
    seed: u64,
    rounds: Option<&[usize]>,
) -> Result<BaselineCv> {
    // Fail fast on unknown or out-of-scope models.
    registry.build(model, params)?;
    let split = make_folds(ids, folds, seed)?;
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let all: Vec<usize> = (0..folds).collect();
    let mut reports = Vec::new();
    let mut scores = Vec::new();
    for &r in rounds.unwrap_or(&all) {
        let roles = split.round(r)?;
        let rows = |v: &[String]| -> Vec<usize> { v.iter().map(|id| index[id.as_str()]).collect() };
        let (tr, va, te) = (rows(&roles.train), rows(&roles.val), rows(&roles.test));
        let mut clf = registry.build(model, params)?;
        clf.fit(&take_rows(features, &tr)?, &take_rows(targets, &tr)?)?;
        let thresholds = select_thresholds(
            &clf.predict(&take_rows(features, &va)?)?,
            &take_rows(targets, &va)?,
        )?;
        let test_scores = clf.predict(&take_rows(features, &te)?)?;
        reports.push((
            r,
            MetricsReport::compute(&test_scores, &take_rows(targets, &te)?, &thresholds)?,
        ));
        for (j, id) in roles.test.iter().enumerate() {
            scores.push((
                id.clone(),
                test_scores.data()[j * N_CLASSES..(j + 1) * N_CLASSES].to_vec(),
            ));
        }
    }
    if reports.is_empty() {
        return Err(Error::InvalidArgument("no rounds selected".into()));
    }
    let aggregate = aggregate_reports(&reports.iter().map(|(_, r)| r.clone()).collect::<Vec<_>>())?;
    Ok(BaselineCv {
        model: model.to_ascii_lowercase(),
        reports,
        aggregate,
        scores,
    })
}

/// `record_id,<class codes>` CSV of scores.
pub fn write_scores_csv(path: &Path, scores: &[(String, Vec<f64>)]) -> Result<()> {
    let mut out = String::from("record_id");
    for c in DiagnosticClass::ALL {
        out.push(',');
        out.push_str(c.code());
    }
    out.push('\n');
    for (id, s) in scores {
        out.push_str(id);
        for v in s {
            out.push_str(&format!(",{v:.9}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
