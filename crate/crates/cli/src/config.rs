//! Resolved run configuration. Loaded from a TOML file, overridden by flags,
//! and written back next to every command's outputs.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use ecgnet::data::{DiagnosticClass, Lead};
use ecgnet::model::ModelConfig;

pub const RUN_CONFIG_FILE: &str = "run_config.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub jobs: usize,
    pub out: Option<PathBuf>,
    pub data: DataSection,
    pub synth: SynthSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub evaluate: EvaluateSection,
    pub explain: ExplainSection,
    pub baseline: BaselineSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            jobs: 1,
            out: None,
            data: DataSection::default(),
            synth: SynthSection::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            evaluate: EvaluateSection::default(),
            explain: ExplainSection::default(),
            baseline: BaselineSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub manifest: Option<PathBuf>,
    /// Sampling rate for records whose manifest row has none (and for synthesis).
    pub fs: f64,
    pub leads: Vec<String>,
    pub nsteps: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            manifest: None,
            fs: ecgnet::data::DEFAULT_FS,
            leads: Lead::ALL.iter().map(|l| l.name().to_string()).collect(),
            nsteps: 15_000,
        }
    }
}

impl DataSection {
    pub fn lead_list(&self) -> Result<Vec<Lead>> {
        self.leads
            .iter()
            .map(|l| l.parse::<Lead>().map_err(Into::into))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub n_records: usize,
    pub classes: Vec<String>,
    pub n_leads: usize,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            n_records: 600,
            classes: vec!["normal".into(), "af".into(), "pvc".into()],
            n_leads: 12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kernel_size: usize,
    pub base_channels: usize,
    pub n_blocks: usize,
    pub dropout_p: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            kernel_size: m.kernel_size,
            base_channels: m.base_channels,
            n_blocks: m.n_blocks,
            dropout_p: m.dropout_p,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub augment: bool,
    pub folds: usize,
    /// Train a single split (round 0) instead of every round.
    pub no_cv: bool,
    pub rounds: Option<Vec<usize>>,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 32,
            max_epochs: 30,
            augment: true,
            folds: 10,
            no_cv: false,
            rounds: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub checkpoint: Option<PathBuf>,
    pub thresholds: Option<PathBuf>,
    /// `all`, `test` (the checkpoint's held-out fold) or a comma list of ids.
    pub records: String,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self {
            checkpoint: None,
            thresholds: None,
            records: "all".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSection {
    pub checkpoint: Option<PathBuf>,
    pub records: String,
    pub mc_samples: usize,
    pub background: usize,
    pub mode: String,
    pub sampling: String,
    pub batch: usize,
    /// `all` or `top` (the predicted class only).
    pub classes: String,
    pub top_leads: usize,
    pub window_seconds: f64,
}

impl Default for ExplainSection {
    fn default() -> Self {
        Self {
            checkpoint: None,
            records: "all".into(),
            mc_samples: 200,
            background: 100,
            mode: "absolute".into(),
            sampling: "stratified".into(),
            batch: 50,
            classes: "all".into(),
            top_leads: 2,
            window_seconds: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    pub models: Vec<String>,
    pub wavelet: String,
    pub levels: usize,
    pub deep_report: Option<PathBuf>,
    pub l2: f64,
    pub lr: f64,
    pub epochs: usize,
    pub hidden: usize,
    pub mlp_lr: f64,
    pub mlp_epochs: usize,
}

impl Default for BaselineSection {
    fn default() -> Self {
        let p = ecgnet::baseline::BaselineParams::default();
        Self {
            models: vec!["lr".into(), "mlp".into()],
            wavelet: ecgnet::baseline::DEFAULT_WAVELET.into(),
            levels: ecgnet::baseline::DEFAULT_LEVELS,
            deep_report: None,
            l2: p.l2,
            lr: p.lr,
            epochs: p.epochs,
            hidden: p.hidden,
            mlp_lr: p.mlp_lr,
            mlp_epochs: p.mlp_epochs,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).context("serializing run config")
    }

    /// Writes `run_config.toml` into `dir`. The output directory itself is left out,
    /// so a rerun elsewhere reproduces the file byte for byte.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(RUN_CONFIG_FILE);
        let cfg = Self {
            out: None,
            ..self.clone()
        };
        std::fs::write(&path, cfg.to_toml()?)
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        Ok(ModelConfig {
            n_leads: self.data.lead_list()?.len(),
            nsteps: self.data.nsteps,
            n_classes: DiagnosticClass::ALL.len(),
            kernel_size: self.model.kernel_size,
            base_channels: self.model.base_channels,
            n_blocks: self.model.n_blocks,
            dropout_p: self.model.dropout_p,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.seed = 7;
        cfg.out = Some("out".into());
        cfg.train.rounds = Some(vec![0, 3]);
        cfg.data.leads = vec!["I".into(), "V1".into()];
        let text = cfg.to_toml().unwrap();
        assert!(text.contains("[train]"));
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.model_config().unwrap().n_leads, 2);
    }

    #[test]
    fn partial_files_fill_defaults_and_unknown_keys_fail() {
        let cfg: RunConfig = toml::from_str("seed = 3\n[train]\nmax_epochs = 2\n").unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.train.max_epochs, 2);
        assert_eq!(cfg.train.batch_size, 32);
        assert!(toml::from_str::<RunConfig>("[train]\nepochz = 2\n").is_err());
    }
}
