use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};

use ecgnet::data::AugmentConfig;
use ecgnet::model::{save_checkpoint, CheckpointMeta};
use ecgnet::train::{
    cross_validate, round_seed, write_history, CvOptions, RoundOutcome, TrainConfig,
};

use super::write_thresholds;
use crate::config::RunConfig;

pub const CHECKPOINT_FILE: &str = "model.ckpt";

pub fn round_dir(out: &Path, r: usize) -> std::path::PathBuf {
    out.join(format!("round_{r:02}"))
}

fn write_round(out: &Path, cfg: &RunConfig, o: &RoundOutcome) -> ecgnet::Result<()> {
    let dir = round_dir(out, o.round);
    std::fs::create_dir_all(&dir).map_err(|e| ecgnet::Error::io(&dir, e))?;
    let extra = BTreeMap::from([
        ("round".to_string(), o.round.to_string()),
        ("folds".to_string(), cfg.train.folds.to_string()),
        ("split_seed".to_string(), cfg.seed.to_string()),
    ]);
    let meta = CheckpointMeta {
        epoch: o.train.best_epoch,
        seed: round_seed(cfg.seed, o.round),
        thresholds: Some(o.train.thresholds.clone()),
        leads: cfg.data.leads.clone(),
        extra,
    };
    save_checkpoint(&o.train.network, &meta, &dir.join(CHECKPOINT_FILE))?;
    write_history(&dir.join("history.csv"), &o.train.history)?;
    let thresholds = dir.join("thresholds.csv");
    write_thresholds(&thresholds, &o.train.thresholds)
        .map_err(|e| ecgnet::Error::io(&thresholds, e))?;
    o.test_report.write_csv(&dir.join("test_report.csv"))?;
    let avg = o.test_report.observed_avg();
    log::info!(
        "round {}: best epoch {}, validation F1 {:.4}, test F1 {:.4}",
        o.round,
        o.train.best_epoch.map_or("none".into(), |e| e.to_string()),
        o.train.best_val_f1,
        avg.f1
    );
    Ok(())
}

pub fn run(mut cfg: RunConfig) -> Result<()> {
    // Normalize lead spelling so checkpoints and the saved config agree.
    cfg.data.leads = cfg
        .data
        .lead_list()?
        .iter()
        .map(|l| l.name().to_string())
        .collect();
    let out = super::prepare_out(&cfg)?;
    let records = super::load_records(&cfg)?;
    let model_cfg = cfg.model_config()?;
    let train_cfg = TrainConfig {
        learning_rate: cfg.train.learning_rate,
        batch_size: cfg.train.batch_size,
        max_epochs: cfg.train.max_epochs,
        seed: cfg.seed,
        augment: cfg.train.augment.then(AugmentConfig::default),
        leads: cfg.data.lead_list()?,
        nsteps: cfg.data.nsteps,
    };
    let opts = CvOptions {
        folds: cfg.train.folds,
        jobs: cfg.jobs.max(1),
        rounds: if cfg.train.no_cv {
            Some(vec![0])
        } else {
            cfg.train.rounds.clone()
        },
    };
    let summary = cross_validate(&records, &model_cfg, &train_cfg, &opts, |o| {
        write_round(&out, &cfg, o)
    })?;

    let mut folds = String::from("record_id,fold\n");
    for (id, f) in &summary.split.assignment {
        folds.push_str(&format!("{id},{f}\n"));
    }
    std::fs::write(out.join("folds.csv"), folds).context("writing folds.csv")?;
    summary.aggregate.write_csv(&out.join("report.csv"))?;
    let avg = &summary.aggregate.avg;
    println!(
        "{} round(s): AVG F1 {:.4}, AVG AUC {}, observed-class F1 {:.4}",
        summary.reports.len(),
        avg.f1,
        avg.auc.map_or("NA".to_string(), |a| format!("{a:.4}")),
        summary.aggregate.observed_avg().f1
    );
    Ok(())
}
