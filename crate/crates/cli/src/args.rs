use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "ecgnet",
    version,
    about = "Multi-label 12-lead ECG classification: train, evaluate, explain"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Default, Args)]
pub struct GlobalArgs {
    /// Master seed; every random stream is derived from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Cross-validation rounds (train) or records (explain) processed concurrently.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Comma-separated lead list, e.g. `I,II,V1`.
    #[arg(long, global = true)]
    pub leads: Option<String>,
    /// Samples per model input (records are cropped or zero-padded).
    #[arg(long, global = true)]
    pub nsteps: Option<usize>,
    #[arg(long, global = true)]
    pub folds: Option<usize>,
    /// Sampling rate (Hz) for records without one, and for synthesis.
    #[arg(long, global = true)]
    pub fs: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Train with k-fold cross-validation.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset.
    Evaluate(EvaluateArgs),
    /// Expected-gradients explanations and lead contribution rates.
    Explain(ExplainArgs),
    /// Expert-feature baselines.
    Baseline(BaselineArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Synth(_) => "synth",
            Self::Train(_) => "train",
            Self::Evaluate(_) => "evaluate",
            Self::Explain(_) => "explain",
            Self::Baseline(_) => "baseline",
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of records.
    #[arg(long)]
    pub n: Option<usize>,
    /// Comma-separated rhythm classes.
    #[arg(long)]
    pub classes: Option<String>,
    #[arg(long)]
    pub n_leads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset manifest CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Train round 0 only.
    #[arg(long)]
    pub no_cv: bool,
    /// Comma-separated subset of rounds.
    #[arg(long)]
    pub rounds: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub base_channels: Option<usize>,
    #[arg(long)]
    pub blocks: Option<usize>,
    #[arg(long)]
    pub no_augment: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// `class,threshold` CSV written by `train`; 0.5 everywhere when absent.
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
    /// `all`, `test` or a comma list of record ids.
    #[arg(long)]
    pub records: Option<String>,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// `all`, `test` or a comma list of record ids.
    #[arg(long)]
    pub records: Option<String>,
    /// Monte Carlo samples per record.
    #[arg(long)]
    pub mc: Option<usize>,
    /// Background set size.
    #[arg(long)]
    pub background: Option<usize>,
    /// `absolute` or `signed` contribution sums.
    #[arg(long)]
    pub mode: Option<String>,
    /// `stratified` or `iid`.
    #[arg(long)]
    pub sampling: Option<String>,
    /// `all` or `top`.
    #[arg(long)]
    pub classes: Option<String>,
    #[arg(long)]
    pub top_leads: Option<usize>,
    #[arg(long)]
    pub window: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Comma-separated models: lr, mlp.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub wavelet: Option<String>,
    #[arg(long)]
    pub levels: Option<usize>,
    /// Deep-model report CSV to include in the comparison table.
    #[arg(long)]
    pub deep_report: Option<PathBuf>,
    /// Run round 0 only.
    #[arg(long)]
    pub no_cv: bool,
    /// Comma-separated subset of rounds.
    #[arg(long)]
    pub rounds: Option<String>,
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(String::from)
        .collect()
}

fn apply_rounds(cfg: &mut RunConfig, no_cv: bool, rounds: Option<&str>) -> anyhow::Result<()> {
    cfg.train.no_cv |= no_cv;
    if let Some(v) = rounds {
        let rounds = split_list(v)
            .iter()
            .map(|r| r.parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| crate::UsageError(format!("--rounds: {e}")))?;
        cfg.train.rounds = Some(rounds);
    }
    Ok(())
}

impl Cli {
    /// The configuration file (or defaults) with every given flag applied on top.
    pub fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.global.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let g = &self.global;
        if let Some(v) = g.seed {
            cfg.seed = v;
        }
        if let Some(v) = g.jobs {
            cfg.jobs = v;
        }
        if let Some(v) = &g.out {
            cfg.out = Some(v.clone());
        }
        if let Some(v) = &g.leads {
            cfg.data.leads = split_list(v);
        }
        if let Some(v) = g.nsteps {
            cfg.data.nsteps = v;
        }
        if let Some(v) = g.folds {
            cfg.train.folds = v;
        }
        if let Some(v) = g.fs {
            cfg.data.fs = v;
        }
        match &self.command {
            Command::Synth(a) => {
                if let Some(v) = a.n {
                    cfg.synth.n_records = v;
                }
                if let Some(v) = &a.classes {
                    cfg.synth.classes = split_list(v);
                }
                if let Some(v) = a.n_leads {
                    cfg.synth.n_leads = v;
                }
            }
            Command::Train(a) => {
                if let Some(v) = &a.data {
                    cfg.data.manifest = Some(v.clone());
                }
                apply_rounds(&mut cfg, a.no_cv, a.rounds.as_deref())?;
                if let Some(v) = a.epochs {
                    cfg.train.max_epochs = v;
                }
                if let Some(v) = a.lr {
                    cfg.train.learning_rate = v;
                }
                if let Some(v) = a.batch_size {
                    cfg.train.batch_size = v;
                }
                if let Some(v) = a.base_channels {
                    cfg.model.base_channels = v;
                }
                if let Some(v) = a.blocks {
                    cfg.model.n_blocks = v;
                }
                if a.no_augment {
                    cfg.train.augment = false;
                }
            }
            Command::Evaluate(a) => {
                if let Some(v) = &a.data {
                    cfg.data.manifest = Some(v.clone());
                }
                if let Some(v) = &a.checkpoint {
                    cfg.evaluate.checkpoint = Some(v.clone());
                }
                if let Some(v) = &a.thresholds {
                    cfg.evaluate.thresholds = Some(v.clone());
                }
                if let Some(v) = &a.records {
                    cfg.evaluate.records = v.clone();
                }
            }
            Command::Explain(a) => {
                if let Some(v) = &a.data {
                    cfg.data.manifest = Some(v.clone());
                }
                if let Some(v) = &a.checkpoint {
                    cfg.explain.checkpoint = Some(v.clone());
                }
                let e = &mut cfg.explain;
                if let Some(v) = &a.records {
                    e.records = v.clone();
                }
                if let Some(v) = a.mc {
                    e.mc_samples = v;
                }
                if let Some(v) = a.background {
                    e.background = v;
                }
                if let Some(v) = &a.mode {
                    e.mode = v.clone();
                }
                if let Some(v) = &a.sampling {
                    e.sampling = v.clone();
                }
                if let Some(v) = &a.classes {
                    e.classes = v.clone();
                }
                if let Some(v) = a.top_leads {
                    e.top_leads = v;
                }
                if let Some(v) = a.window {
                    e.window_seconds = v;
                }
            }
            Command::Baseline(a) => {
                if let Some(v) = &a.data {
                    cfg.data.manifest = Some(v.clone());
                }
                let b = &mut cfg.baseline;
                if let Some(v) = &a.model {
                    b.models = split_list(v);
                }
                if let Some(v) = &a.wavelet {
                    b.wavelet = v.clone();
                }
                if let Some(v) = a.levels {
                    b.levels = v;
                }
                if let Some(v) = &a.deep_report {
                    b.deep_report = Some(v.clone());
                }
                apply_rounds(&mut cfg, a.no_cv, a.rounds.as_deref())?;
            }
        }
        Ok(cfg)
    }
}
