//! Training: Adam on mean binary cross-entropy, per-epoch model selection by
//! validation F1 with per-class thresholds, and k-fold cross-validation.

mod folds;
mod optim;
mod thresholds;

pub use folds::{make_folds, FoldSplit, RoundRoles};
pub use optim::{Adam, AdamConfig};
pub use thresholds::{f1_at, select_thresholds, threshold_grid};

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::data::{
    augment, labels_to_tensor, preprocess_fix_length, records_to_tensor, select_leads,
    AugmentConfig, EcgRecord, Lead,
};
use crate::error::{Error, Result};
use crate::metrics::{aggregate_reports, MetricsReport};
use crate::model::{ForwardCtx, Mode, ModelConfig, Network};
use crate::seed;
use crate::tensor::{Graph, Tensor};

/// Batch size used for inference-only passes.
pub const EVAL_BATCH: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// `None` trains on the unmodified signals.
    pub augment: Option<AugmentConfig>,
    pub leads: Vec<Lead>,
    pub nsteps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 32,
            max_epochs: 30,
            seed: 0,
            augment: Some(AugmentConfig::default()),
            leads: Lead::ALL.to_vec(),
            nsteps: 15_000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.leads.is_empty() || self.nsteps == 0 {
            return Err(Error::Config(
                "need at least one lead and one sample".into(),
            ));
        }
        if let Some(a) = &self.augment {
            a.validate()?;
        }
        Ok(())
    }

    /// The model input shape this configuration produces must match `model`.
    pub fn check_model(&self, model: &ModelConfig) -> Result<()> {
        if model.n_leads != self.leads.len() || model.nsteps != self.nsteps {
            return Err(Error::Config(format!(
                "model expects {} leads x {} samples, training data is {} x {}",
                model.n_leads,
                model.nsteps,
                self.leads.len(),
                self.nsteps
            )));
        }
        Ok(())
    }
}

/// Lead selection followed by length fixing.
pub fn prepare_records(
    records: &[EcgRecord],
    leads: &[Lead],
    nsteps: usize,
) -> Result<Vec<EcgRecord>> {
    records
        .iter()
        .map(|r| preprocess_fix_length(&select_leads(r, leads)?, nsteps))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_avg_f1: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Snapshot with the best validation average F1.
    pub network: Network,
    pub thresholds: Vec<f64>,
    pub history: Vec<EpochRecord>,
    /// 1-based epoch of the returned snapshot; `None` for the untrained network.
    pub best_epoch: Option<usize>,
    pub best_val_f1: f64,
    pub best_val_loss: f64,
}

/// One optimizer step on a batch; returns the batch loss before the update.
pub fn train_step(
    net: &mut Network,
    adam: &mut Adam,
    x: Tensor,
    y: &Tensor,
    rng: &mut dyn RngCore,
) -> Result<f64> {
    let mut g = Graph::new();
    let xv = g.constant(x);
    let mut ctx = ForwardCtx::new(Mode::Train(rng), true);
    let probs = net.forward(&mut g, xv, &mut ctx)?;
    let loss = g.bce_loss(probs, y)?;
    g.backward(loss)?;
    let grads = ctx
        .params
        .iter()
        .map(|v| {
            g.grad(*v)
                .ok_or_else(|| Error::InvalidArgument("parameter without gradient".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    adam.step(&mut net.parameters_mut(), &grads)?;
    net.update_running_stats(&ctx.bn_stats)?;
    Ok(g.value(loss).data()[0])
}

/// Eval-mode probabilities `[N, 9]` and multi-hot targets `[N, 9]`.
pub fn score_records(net: &Network, records: &[EcgRecord]) -> Result<(Tensor, Tensor)> {
    let refs: Vec<&EcgRecord> = records.iter().collect();
    let x = records_to_tensor(&refs)?;
    Ok((
        net.predict_batched(&x, EVAL_BATCH)?,
        labels_to_tensor(&refs),
    ))
}

/// Mean binary cross-entropy of probabilities against targets.
pub fn mean_bce(scores: &Tensor, targets: &Tensor) -> Result<f64> {
    let mut g = Graph::new();
    let p = g.constant(scores.clone());
    let loss = g.bce_loss(p, targets)?;
    Ok(g.value(loss).data()[0])
}

/// Average F1 used for model selection: the mean over classes present in the targets.
pub fn selection_f1(scores: &Tensor, targets: &Tensor, thresholds: &[f64]) -> Result<f64> {
    crate::metrics::observed_f1(scores, targets, thresholds)
}

/// Trains on `train`, selecting the epoch snapshot with the best validation average F1;
/// among epochs tied on F1 the lowest validation loss wins.
/// Records are lead-selected and length-fixed here; augmentation touches training batches only.
pub fn train_model(
    train: &[EcgRecord],
    val: &[EcgRecord],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    cfg.check_model(model_cfg)?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::InvalidArgument(
            "training and validation sets must be non-empty".into(),
        ));
    }
    let val_ids: HashMap<&str, ()> = val.iter().map(|r| (r.record_id.as_str(), ())).collect();
    if let Some(r) = train
        .iter()
        .find(|r| val_ids.contains_key(r.record_id.as_str()))
    {
        return Err(Error::InvalidArgument(format!(
            "record {} is in both the training and validation sets",
            r.record_id
        )));
    }
    let train = prepare_records(train, &cfg.leads, cfg.nsteps)?;
    let val = prepare_records(val, &cfg.leads, cfg.nsteps)?;

    let mut net = Network::build(model_cfg, cfg.seed)?;
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.learning_rate));
    let mut shuffle_rng = seed::rng(cfg.seed, "train/shuffle");
    let mut augment_rng = seed::rng(cfg.seed, "train/augment");
    let mut dropout_rng = seed::rng(cfg.seed, "train/dropout");

    let (scores, targets) = score_records(&net, &val)?;
    let thresholds = select_thresholds(&scores, &targets)?;
    let mut best = TrainOutcome {
        best_val_f1: selection_f1(&scores, &targets, &thresholds)?,
        best_val_loss: mean_bce(&scores, &targets)?,
        network: net.clone(),
        thresholds,
        history: Vec::new(),
        best_epoch: None,
    };

    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut n_seen = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<EcgRecord> = chunk
                .iter()
                .map(|&i| match &cfg.augment {
                    Some(a) => augment(&train[i], a, &mut augment_rng),
                    None => train[i].clone(),
                })
                .collect();
            let refs: Vec<&EcgRecord> = batch.iter().collect();
            let loss = train_step(
                &mut net,
                &mut adam,
                records_to_tensor(&refs)?,
                &labels_to_tensor(&refs),
                &mut dropout_rng,
            )?;
            loss_sum += loss * chunk.len() as f64;
            n_seen += chunk.len();
        }
        let (scores, targets) = score_records(&net, &val)?;
        let thresholds = select_thresholds(&scores, &targets)?;
        let f1 = selection_f1(&scores, &targets, &thresholds)?;
        let val_loss = mean_bce(&scores, &targets)?;
        let train_loss = loss_sum / n_seen as f64;
        log::info!(
            "epoch {epoch}: train loss {train_loss:.5}, validation loss {val_loss:.5}, F1 {f1:.4}"
        );
        best.history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_avg_f1: f1,
        });
        let better =
            f1 > best.best_val_f1 || (f1 == best.best_val_f1 && val_loss < best.best_val_loss);
        if best.best_epoch.is_none() || better {
            best.network = net.clone();
            best.thresholds = thresholds;
            best.best_epoch = Some(epoch);
            best.best_val_f1 = f1;
            best.best_val_loss = val_loss;
        }
    }
    Ok(best)
}

pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut out = String::from("epoch,train_loss,val_loss,val_avg_F1\n");
    for h in history {
        out.push_str(&format!(
            "{},{:.8},{:.8},{:.8}\n",
            h.epoch, h.train_loss, h.val_loss, h.val_avg_f1
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug)]
pub struct CvOptions {
    pub folds: usize,
    /// Rounds to run concurrently.
    pub jobs: usize,
    /// Subset of rounds to run; `None` runs all of them.
    pub rounds: Option<Vec<usize>>,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            folds: 10,
            jobs: 1,
            rounds: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RoundOutcome {
    pub round: usize,
    pub roles: RoundRoles,
    pub train: TrainOutcome,
    /// Test-fold report at the validation-selected thresholds.
    pub test_report: MetricsReport,
}

#[derive(Clone, Debug)]
pub struct CvSummary {
    pub split: FoldSplit,
    pub reports: Vec<(usize, MetricsReport)>,
    pub aggregate: MetricsReport,
}

/// Seed used for round `r`: model init, shuffling, augmentation and dropout.
pub fn round_seed(seed: u64, r: usize) -> u64 {
    seed::derive(seed, &format!("cv/round/{r}"))
}

fn run_round(
    records: &[EcgRecord],
    index: &HashMap<&str, usize>,
    split: &FoldSplit,
    r: usize,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<RoundOutcome> {
    let roles = split.round(r)?;
    let pick = |ids: &[String]| -> Vec<EcgRecord> {
        ids.iter()
            .map(|id| records[index[id.as_str()]].clone())
            .collect()
    };
    let round_cfg = TrainConfig {
        seed: round_seed(cfg.seed, r),
        ..cfg.clone()
    };
    let outcome = train_model(
        &pick(&roles.train),
        &pick(&roles.val),
        model_cfg,
        &round_cfg,
    )?;
    // The test fold is first touched here, after the snapshot is fixed.
    let test = prepare_records(&pick(&roles.test), &cfg.leads, cfg.nsteps)?;
    let (scores, targets) = score_records(&outcome.network, &test)?;
    let test_report = MetricsReport::compute(&scores, &targets, &outcome.thresholds)?;
    Ok(RoundOutcome {
        round: r,
        roles,
        train: outcome,
        test_report,
    })
}

/// k-fold cross-validation. `on_round` sees every finished round in round order;
/// the aggregate is the unweighted mean of the per-round test reports.
pub fn cross_validate(
    records: &[EcgRecord],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    opts: &CvOptions,
    mut on_round: impl FnMut(&RoundOutcome) -> Result<()>,
) -> Result<CvSummary> {
    let ids: Vec<&str> = records.iter().map(|r| r.record_id.as_str()).collect();
    let split = make_folds(&ids, opts.folds, cfg.seed)?;
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let rounds = opts
        .rounds
        .clone()
        .unwrap_or_else(|| (0..opts.folds).collect());
    if rounds.is_empty() {
        return Err(Error::InvalidArgument("no rounds selected".into()));
    }
    let mut reports = Vec::new();
    for wave in rounds.chunks(opts.jobs.max(1)) {
        let outcomes: Vec<Result<RoundOutcome>> = if wave.len() == 1 {
            vec![run_round(records, &index, &split, wave[0], model_cfg, cfg)]
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = wave
                    .iter()
                    .map(|&r| {
                        let (index, split) = (&index, &split);
                        s.spawn(move || run_round(records, index, split, r, model_cfg, cfg))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("training thread panicked"))
                    .collect()
            })
        };
        for outcome in outcomes {
            let outcome = outcome?;
            on_round(&outcome)?;
            reports.push((outcome.round, outcome.test_report));
        }
    }
    let aggregate = aggregate_reports(&reports.iter().map(|(_, r)| r.clone()).collect::<Vec<_>>())?;
    Ok(CvSummary {
        split,
        reports,
        aggregate,
    })
}

#[cfg(test)]
mod tests;
