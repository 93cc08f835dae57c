use std::fmt::Write as _;

use anyhow::{Context, Result};

use ecgnet::baseline::{
    feature_matrix, run_baseline_cv, write_features_csv, write_scores_csv, BaselineParams,
    BaselineRegistry, WaveletRegistry,
};
use ecgnet::data::{labels_to_tensor, DiagnosticClass, EcgRecord};
use ecgnet::metrics::{read_report_csv, ClassMetrics, MetricsReport};
use ecgnet::train::prepare_records;

use crate::config::RunConfig;

fn comparison_rows(out: &mut String, model: &str, report: &MetricsReport) -> Result<()> {
    let cell = |m: &ClassMetrics| {
        format!(
            "{:.6},{:.6},{:.6},{},{:.6}",
            m.precision,
            m.recall,
            m.f1,
            m.auc.map_or("NA".to_string(), |a| format!("{a:.6}")),
            m.accuracy
        )
    };
    for (c, row) in DiagnosticClass::ALL.iter().zip(&report.rows) {
        writeln!(out, "{model},{},{}", c.code(), cell(row))?;
    }
    writeln!(out, "{model},AVG,{}", cell(&report.avg))?;
    Ok(())
}

pub fn run(cfg: RunConfig) -> Result<()> {
    let out = super::prepare_out(&cfg)?;
    let registry = BaselineRegistry::with_builtins();
    let b = &cfg.baseline;
    let params = BaselineParams {
        l2: b.l2,
        lr: b.lr,
        epochs: b.epochs,
        hidden: b.hidden,
        mlp_lr: b.mlp_lr,
        mlp_epochs: b.mlp_epochs,
        seed: cfg.seed,
    };
    // Reject unknown or out-of-scope models before the feature pass.
    for m in &b.models {
        registry.build(m, &params)?;
    }
    let records = super::load_records(&cfg)?;
    let prepared = prepare_records(&records, &cfg.data.lead_list()?, cfg.data.nsteps)?;
    let wavelets = WaveletRegistry::with_builtins();
    let (names, x) = feature_matrix(&prepared, wavelets.get(&b.wavelet)?, b.levels)?;
    let ids: Vec<&str> = prepared.iter().map(|r| r.record_id.as_str()).collect();
    write_features_csv(&out.join("features.csv"), &ids, &names, &x)?;
    let y = labels_to_tensor(&prepared.iter().collect::<Vec<&EcgRecord>>());
    log::info!("{} features per record", names.len());

    let rounds = if cfg.train.no_cv {
        Some(vec![0])
    } else {
        cfg.train.rounds.clone()
    };
    let mut comparison = String::from("model,class,Precision,Recall,F1,AUC,Accuracy\n");
    if let Some(p) = &b.deep_report {
        comparison_rows(&mut comparison, "deep", &read_report_csv(p)?)?;
    }
    for m in &b.models {
        let cv = run_baseline_cv(
            &ids,
            &x,
            &y,
            m,
            &registry,
            &params,
            cfg.train.folds,
            cfg.seed,
            rounds.as_deref(),
        )?;
        write_scores_csv(&out.join(format!("{}_scores.csv", cv.model)), &cv.scores)?;
        cv.aggregate
            .write_csv(&out.join(format!("{}_report.csv", cv.model)))?;
        comparison_rows(&mut comparison, &cv.model, &cv.aggregate)?;
        println!(
            "{}: AVG F1 {:.4}, observed-class F1 {:.4}",
            cv.model,
            cv.aggregate.avg.f1,
            cv.aggregate.observed_avg().f1
        );
    }
    std::fs::write(out.join("comparison.csv"), comparison).context("writing comparison.csv")?;
    Ok(())
}
