use anyhow::{Context, Result};

use ecgnet::baseline::write_scores_csv;
use ecgnet::data::DiagnosticClass;
use ecgnet::metrics::{binarize, multilabel_confusion_matrix, render_confusion_svg, MetricsReport};
use ecgnet::model::load_checkpoint;
use ecgnet::train::{prepare_records, score_records};

use super::{checkpoint_leads, read_thresholds, require, select_records};
use crate::config::RunConfig;

pub fn run(mut cfg: RunConfig) -> Result<()> {
    let ckpt = require(&cfg.evaluate.checkpoint, "--checkpoint")?.clone();
    let (net, meta) = load_checkpoint(&ckpt)?;
    // The checkpoint fixes the input layout.
    cfg.data.leads = meta.leads.clone();
    cfg.data.nsteps = net.cfg.nsteps;
    let out = super::prepare_out(&cfg)?;
    let leads = checkpoint_leads(&meta)?;
    net.ensure_input(leads.len(), net.cfg.nsteps)?;

    let records = super::load_records(&cfg)?;
    let selected = select_records(&records, &cfg.evaluate.records, &meta)?;
    let prepared = prepare_records(&selected, &leads, net.cfg.nsteps)?;
    let (scores, targets) = score_records(&net, &prepared)?;
    let thresholds = match &cfg.evaluate.thresholds {
        Some(p) => read_thresholds(p)?,
        None => {
            log::warn!("no thresholds file given; using 0.5 for every class");
            vec![0.5; DiagnosticClass::ALL.len()]
        }
    };

    let report = MetricsReport::compute(&scores, &targets, &thresholds)?;
    report.write_csv(&out.join("report.csv"))?;
    let matrices = multilabel_confusion_matrix(&binarize(&scores, &thresholds)?, &targets)?;
    let names: Vec<&str> = DiagnosticClass::ALL.iter().map(|c| c.code()).collect();
    std::fs::write(
        out.join("confusion.svg"),
        render_confusion_svg(&matrices, &names),
    )
    .context("writing confusion.svg")?;
    let n = DiagnosticClass::ALL.len();
    let rows: Vec<(String, Vec<f64>)> = prepared
        .iter()
        .enumerate()
        .map(|(i, r)| {
            (
                r.record_id.clone(),
                scores.data()[i * n..(i + 1) * n].to_vec(),
            )
        })
        .collect();
    write_scores_csv(&out.join("scores.csv"), &rows)?;
    println!(
        "{} records: AVG F1 {:.4}, observed-class F1 {:.4}",
        prepared.len(),
        report.avg.f1,
        report.observed_avg().f1
    );
    Ok(())
}
