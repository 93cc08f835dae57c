mod baseline;
mod evaluate;
mod explain;
mod synth;
mod train;

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use ecgnet::data::{load_manifest, DiagnosticClass, EcgRecord, Lead};
use ecgnet::model::CheckpointMeta;
use ecgnet::train::{make_folds, RoundRoles};

use crate::args::Command;
use crate::config::RunConfig;

/// A missing or inconsistent argument; reported with exit status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn run(command: &Command, cfg: RunConfig) -> Result<()> {
    match command {
        Command::Synth(_) => synth::run(cfg),
        Command::Train(_) => train::run(cfg),
        Command::Evaluate(_) => evaluate::run(cfg),
        Command::Explain(_) => explain::run(cfg),
        Command::Baseline(_) => baseline::run(cfg),
    }
}

fn require<'a, T>(value: &'a Option<T>, flag: &str) -> Result<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| UsageError(format!("missing required {flag} (flag or config file)")).into())
}

/// Creates the output directory and writes the resolved configuration into it.
fn prepare_out(cfg: &RunConfig) -> Result<PathBuf> {
    let out = require(&cfg.out, "--out")?.clone();
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    cfg.save(&out)?;
    Ok(out)
}

fn load_records(cfg: &RunConfig) -> Result<Vec<EcgRecord>> {
    let path = require(&cfg.data.manifest, "--data")?;
    let mut manifest = load_manifest(path)?;
    manifest.default_fs = cfg.data.fs;
    let records = manifest.load_all()?;
    log::info!("loaded {} records from {}", records.len(), path.display());
    Ok(records)
}

fn checkpoint_leads(meta: &CheckpointMeta) -> Result<Vec<Lead>> {
    Ok(meta
        .leads
        .iter()
        .map(|l| l.parse())
        .collect::<ecgnet::Result<_>>()?)
}

/// Fold bookkeeping stored in checkpoint metadata by `train`.
fn checkpoint_roles(meta: &CheckpointMeta, records: &[EcgRecord]) -> Result<Option<RoundRoles>> {
    let get = |k: &str| meta.extra.get(k).map(|v| v.parse::<u64>());
    match (get("round"), get("folds"), get("split_seed")) {
        (Some(r), Some(k), Some(seed)) => {
            let ids: Vec<&str> = records.iter().map(|r| r.record_id.as_str()).collect();
            let split = make_folds(&ids, k? as usize, seed?)?;
            Ok(Some(split.round(r? as usize)?))
        }
        _ => Ok(None),
    }
}

/// `all`, `test` (the checkpoint's held-out fold) or a comma list of record ids.
fn select_records(
    records: &[EcgRecord],
    spec: &str,
    meta: &CheckpointMeta,
) -> Result<Vec<EcgRecord>> {
    let index: HashMap<&str, &EcgRecord> =
        records.iter().map(|r| (r.record_id.as_str(), r)).collect();
    let pick = |ids: &[String]| -> Result<Vec<EcgRecord>> {
        ids.iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .map(|r| (*r).clone())
                    .ok_or_else(|| ecgnet::Error::UnknownRecord(id.clone()).into())
            })
            .collect()
    };
    match spec.trim() {
        "all" => Ok(records.to_vec()),
        "test" => match checkpoint_roles(meta, records)? {
            Some(roles) => pick(&roles.test),
            None => bail!(UsageError(
                "`--records test` needs a checkpoint written by `train`".into()
            )),
        },
        list => {
            let ids: Vec<String> = list
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect();
            if ids.is_empty() {
                bail!(UsageError("empty --records list".into()));
            }
            pick(&ids)
        }
    }
}

fn write_thresholds(path: &Path, thresholds: &[f64]) -> std::io::Result<()> {
    let mut out = String::from("class,threshold\n");
    for (c, t) in DiagnosticClass::ALL.iter().zip(thresholds) {
        out.push_str(&format!("{},{t:.2}\n", c.code()));
    }
    std::fs::write(path, out)
}

fn read_thresholds(path: &Path) -> Result<Vec<f64>> {
    let mut reader =
        csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut by_class = HashMap::new();
    for row in reader.records() {
        let row = row?;
        let t: f64 = row
            .get(1)
            .context("threshold column missing")?
            .trim()
            .parse()
            .with_context(|| format!("bad threshold in {}", path.display()))?;
        by_class.insert(row.get(0).unwrap_or_default().trim().to_string(), t);
    }
    DiagnosticClass::ALL
        .iter()
        .map(|c| {
            by_class
                .get(c.code())
                .copied()
                .with_context(|| format!("{} has no threshold for {}", path.display(), c.code()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thresholds_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let t: Vec<f64> = (1..=9).map(|i| f64::from(i) / 10.0).collect();
        write_thresholds(&p, &t).unwrap();
        assert_eq!(read_thresholds(&p).unwrap(), t);
        std::fs::write(&p, "class,threshold\nSNR,0.5\n").unwrap();
        assert!(read_thresholds(&p).is_err());
    }
}
