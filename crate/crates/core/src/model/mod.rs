//! Residual 1D-CNN classifier.
//!
//! ```text
//! stem:   conv(K, stride 2) -> BN -> ReLU -> maxpool(3, stride 2)
//! block:  conv(K, stride 2) -> BN -> ReLU -> dropout -> conv(K) -> BN
//!         + shortcut conv(1) -> maxpool(stride)         -> add -> ReLU
//! head:   adaptive avg ‖ adaptive max -> linear -> sigmoid
//! ```
//!
//! Counting every conv, BN, activation, dropout and pooling op, the default
//! network has 4 (stem) + 4 × 9 (blocks) + 4 (head) = 44 layers, 14 of them
//! weighted.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta, CHECKPOINT_VERSION};

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::data::N_CLASSES;
use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::{BatchStats, Graph, PoolKind, Tensor, Var};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
const STEM_POOL: (usize, usize) = (3, 2);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_leads: usize,
    pub nsteps: usize,
    pub n_classes: usize,
    pub kernel_size: usize,
    pub base_channels: usize,
    pub n_blocks: usize,
    pub dropout_p: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_leads: 12,
            nsteps: 15_000,
            n_classes: N_CLASSES,
            kernel_size: 15,
            base_channels: 64,
            n_blocks: 4,
            dropout_p: 0.2,
        }
    }
}

impl ModelConfig {
    /// Output channels of each residual block: `base · 2^i`.
    pub fn block_channels(&self) -> Vec<usize> {
        (0..self.n_blocks)
            .map(|i| self.base_channels << i)
            .collect()
    }

    pub fn block_specs(&self) -> Vec<ResidualBlockSpec> {
        let mut in_channels = self.base_channels;
        self.block_channels()
            .into_iter()
            .map(|out_channels| {
                let spec = ResidualBlockSpec {
                    in_channels,
                    out_channels,
                    stride: 2,
                    kernel_size: self.kernel_size,
                    dropout_p: self.dropout_p,
                };
                in_channels = out_channels;
                spec
            })
            .collect()
    }

    /// Sequence length after the stem and after each block.
    pub fn stage_lengths(&self) -> Result<Vec<usize>> {
        let too_short = || {
            Error::Config(format!(
                "nsteps={} is too short for {} residual blocks with kernel {}",
                self.nsteps, self.n_blocks, self.kernel_size
            ))
        };
        let pad = self.kernel_size / 2;
        let mut len = conv_len(self.nsteps, self.kernel_size, 2, pad).ok_or_else(too_short)?;
        if len < STEM_POOL.0 {
            return Err(too_short());
        }
        len = (len - STEM_POOL.0) / STEM_POOL.1 + 1;
        let mut out = vec![len];
        for spec in self.block_specs() {
            len = conv_len(len, spec.kernel_size, spec.stride, pad).ok_or_else(too_short)?;
            out.push(len);
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_blocks == 0 {
            return Err(Error::Config("n_blocks must be >= 1".into()));
        }
        if self.kernel_size.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "kernel_size must be odd, got {}",
                self.kernel_size
            )));
        }
        if !(1..=12).contains(&self.n_leads) {
            return Err(Error::Config(format!(
                "n_leads must be 1..=12, got {}",
                self.n_leads
            )));
        }
        if self.base_channels == 0 || self.n_classes == 0 {
            return Err(Error::Config(
                "channel and class counts must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!(
                "dropout_p must be in [0, 1), got {}",
                self.dropout_p
            )));
        }
        self.stage_lengths().map(|_| ())
    }

    pub fn n_features(&self) -> usize {
        2 * self
            .block_channels()
            .last()
            .copied()
            .unwrap_or(self.base_channels)
    }
}

fn conv_len(len: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = len + 2 * pad;
    (padded >= k).then(|| (padded - k) / stride + 1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualBlockSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Stride of the first main-path conv and of the shortcut pool.
    pub stride: usize,
    pub kernel_size: usize,
    pub dropout_p: f64,
}

impl ResidualBlockSpec {
    pub fn needs_shortcut(&self) -> bool {
        self.in_channels != self.out_channels || self.stride != 1
    }
}

/// Forward-pass mode. Training draws dropout masks from the given RNG and
/// normalizes with batch statistics.
pub enum Mode<'a> {
    Train(&'a mut dyn RngCore),
    Eval,
}

impl Mode<'_> {
    fn is_train(&self) -> bool {
        matches!(self, Mode::Train(_))
    }
}

/// Bookkeeping for one forward pass on a graph.
pub struct ForwardCtx<'a> {
    pub mode: Mode<'a>,
    /// Whether parameter leaves require gradients.
    pub param_grads: bool,
    /// Parameter leaves in [`Network::parameters`] order.
    pub params: Vec<Var>,
    /// Batch statistics of every train-mode batch norm, in network order.
    pub bn_stats: Vec<BatchStats>,
}

impl<'a> ForwardCtx<'a> {
    pub fn new(mode: Mode<'a>, param_grads: bool) -> Self {
        Self {
            mode,
            param_grads,
            params: Vec::new(),
            bn_stats: Vec::new(),
        }
    }

    fn param(&mut self, g: &mut Graph, t: &Tensor) -> Var {
        let v = g.leaf(t.clone(), self.param_grads);
        self.params.push(v);
        v
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Conv1d {
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
}

impl Conv1d {
    fn init(
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        padding: usize,
        rng: &mut dyn RngCore,
    ) -> Self {
        let bound = 1.0 / ((cin * k) as f64).sqrt();
        Self {
            weight: Tensor::from_fn([cout, cin, k], |_| rng.random_range(-bound..bound)),
            bias: Tensor::from_fn([cout], |_| rng.random_range(-bound..bound)),
            stride,
            padding,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var, ctx: &mut ForwardCtx) -> Result<Var> {
        let w = ctx.param(g, &self.weight);
        let b = ctx.param(g, &self.bias);
        g.conv1d(x, w, b, self.stride, self.padding)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm1d {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
}

impl BatchNorm1d {
    fn new(c: usize) -> Self {
        Self {
            gamma: Tensor::full([c], 1.0),
            beta: Tensor::zeros([c]),
            running_mean: Tensor::zeros([c]),
            running_var: Tensor::full([c], 1.0),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var, ctx: &mut ForwardCtx) -> Result<Var> {
        let gamma = ctx.param(g, &self.gamma);
        let beta = ctx.param(g, &self.beta);
        if ctx.mode.is_train() {
            let (y, stats) = g.batchnorm1d_train(x, gamma, beta, BN_EPS)?;
            ctx.bn_stats.push(stats);
            Ok(y)
        } else {
            g.batchnorm1d_eval(
                x,
                gamma,
                beta,
                self.running_mean.data(),
                self.running_var.data(),
                BN_EPS,
            )
        }
    }

    fn update_running(&mut self, stats: &BatchStats) {
        let m = BN_MOMENTUM;
        for (r, s) in self.running_mean.data_mut().iter_mut().zip(&stats.mean) {
            *r = (1.0 - m) * *r + m * s;
        }
        for (r, s) in self
            .running_var
            .data_mut()
            .iter_mut()
            .zip(&stats.var_unbiased)
        {
            *r = (1.0 - m) * *r + m * s;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    fn init(fin: usize, fout: usize, rng: &mut dyn RngCore) -> Self {
        let bound = 1.0 / (fin as f64).sqrt();
        Self {
            weight: Tensor::from_fn([fout, fin], |_| rng.random_range(-bound..bound)),
            bias: Tensor::from_fn([fout], |_| rng.random_range(-bound..bound)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResidualBlock {
    pub spec: ResidualBlockSpec,
    pub conv1: Conv1d,
    pub bn1: BatchNorm1d,
    pub conv2: Conv1d,
    pub bn2: BatchNorm1d,
    pub shortcut: Option<Conv1d>,
}

impl ResidualBlock {
    fn init(spec: ResidualBlockSpec, rng: &mut dyn RngCore) -> Self {
        let (cin, cout, k) = (spec.in_channels, spec.out_channels, spec.kernel_size);
        let pad = k / 2;
        Self {
            conv1: Conv1d::init(cin, cout, k, spec.stride, pad, rng),
            bn1: BatchNorm1d::new(cout),
            conv2: Conv1d::init(cout, cout, k, 1, pad, rng),
            bn2: BatchNorm1d::new(cout),
            shortcut: spec
                .needs_shortcut()
                .then(|| Conv1d::init(cin, cout, 1, 1, 0, rng)),
            spec,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var, ctx: &mut ForwardCtx) -> Result<Var> {
        let mut h = self.conv1.forward(g, x, ctx)?;
        h = self.bn1.forward(g, h, ctx)?;
        h = g.relu(h);
        h = match &mut ctx.mode {
            Mode::Train(rng) => g.dropout(h, self.spec.dropout_p, Some(&mut **rng))?,
            Mode::Eval => h,
        };
        h = self.conv2.forward(g, h, ctx)?;
        h = self.bn2.forward(g, h, ctx)?;
        let mut skip = x;
        if let Some(sc) = &self.shortcut {
            skip = sc.forward(g, skip, ctx)?;
            if self.spec.stride > 1 {
                skip = g.maxpool1d(skip, self.spec.stride, self.spec.stride, true)?;
            }
        }
        let sum = g.add(h, skip)?;
        Ok(g.relu(sum))
    }

    fn batch_norms_mut(&mut self) -> [&mut BatchNorm1d; 2] {
        [&mut self.bn1, &mut self.bn2]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub cfg: ModelConfig,
    pub stem_conv: Conv1d,
    pub stem_bn: BatchNorm1d,
    pub blocks: Vec<ResidualBlock>,
    pub head: Linear,
}

impl Network {
    /// Builds the network with fan-in scaled uniform weights drawn from `seed`.
    pub fn build(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = seed::rng(seed, "model/init");
        let k = cfg.kernel_size;
        let stem_conv = Conv1d::init(cfg.n_leads, cfg.base_channels, k, 2, k / 2, &mut rng);
        let blocks = cfg
            .block_specs()
            .into_iter()
            .map(|s| ResidualBlock::init(s, &mut rng))
            .collect();
        let head = Linear::init(cfg.n_features(), cfg.n_classes, &mut rng);
        Ok(Self {
            cfg: cfg.clone(),
            stem_conv,
            stem_bn: BatchNorm1d::new(cfg.base_channels),
            blocks,
            head,
        })
    }

    /// Records the forward pass on `g`; returns `[B, n_classes]` probabilities.
    pub fn forward(&self, g: &mut Graph, x: Var, ctx: &mut ForwardCtx) -> Result<Var> {
        let shape = g.value(x).shape();
        if shape.len() != 3 || shape[1] != self.cfg.n_leads || shape[2] != self.cfg.nsteps {
            return Err(Error::shape(
                "network",
                format!(
                    "input {:?}, model expects [B, {}, {}]",
                    shape, self.cfg.n_leads, self.cfg.nsteps
                ),
            ));
        }
        let batch = shape[0];
        let mut h = self.stem_conv.forward(g, x, ctx)?;
        h = self.stem_bn.forward(g, h, ctx)?;
        h = g.relu(h);
        h = g.maxpool1d(h, STEM_POOL.0, STEM_POOL.1, false)?;
        for block in &self.blocks {
            h = block.forward(g, h, ctx)?;
        }
        let avg = g.adaptive_pool(h, PoolKind::Avg)?;
        let max = g.adaptive_pool(h, PoolKind::Max)?;
        let pooled = g.concat(avg, max, 1)?;
        let features = g.reshape(pooled, [batch, self.cfg.n_features()])?;
        let w = ctx.param(g, &self.head.weight);
        let b = ctx.param(g, &self.head.bias);
        let logits = g.linear(features, w, b)?;
        Ok(g.sigmoid(logits))
    }

    /// Eval-mode probabilities for a `[B, n_leads, nsteps]` batch.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let mut ctx = ForwardCtx::new(Mode::Eval, false);
        let out = self.forward(&mut g, xv, &mut ctx)?;
        Ok(g.value(out).clone())
    }

    /// Eval-mode prediction in chunks of `batch` rows.
    pub fn predict_batched(&self, x: &Tensor, batch: usize) -> Result<Tensor> {
        let n = x.shape()[0];
        let mut data = Vec::with_capacity(n * self.cfg.n_classes);
        for start in (0..n).step_by(batch.max(1)) {
            let end = (start + batch.max(1)).min(n);
            data.extend(self.predict(&x.batch_slice(start, end)?)?.into_data());
        }
        Tensor::new(vec![n, self.cfg.n_classes], data)
    }

    fn batch_norms_mut(&mut self) -> Vec<&mut BatchNorm1d> {
        let mut out = vec![&mut self.stem_bn];
        for b in &mut self.blocks {
            out.extend(b.batch_norms_mut());
        }
        out
    }

    /// Folds train-mode batch statistics into the running estimates.
    pub fn update_running_stats(&mut self, stats: &[BatchStats]) -> Result<()> {
        let bns = self.batch_norms_mut();
        if bns.len() != stats.len() {
            return Err(Error::InvalidArgument(format!(
                "{} batch-norm statistics for {} layers",
                stats.len(),
                bns.len()
            )));
        }
        for (bn, s) in bns.into_iter().zip(stats) {
            bn.update_running(s);
        }
        Ok(())
    }

    /// Trainable parameters with stable names, in forward registration order.
    pub fn parameters(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        fn conv<'a>(out: &mut Vec<(String, &'a Tensor)>, p: &str, c: &'a Conv1d) {
            out.push((format!("{p}.weight"), &c.weight));
            out.push((format!("{p}.bias"), &c.bias));
        }
        // Must mirror the order in which `forward` registers leaves.
        conv(&mut out, "stem.conv", &self.stem_conv);
        out.push(("stem.bn.gamma".into(), &self.stem_bn.gamma));
        out.push(("stem.bn.beta".into(), &self.stem_bn.beta));
        for (i, b) in self.blocks.iter().enumerate() {
            conv(&mut out, &format!("blocks.{i}.conv1"), &b.conv1);
            out.push((format!("blocks.{i}.bn1.gamma"), &b.bn1.gamma));
            out.push((format!("blocks.{i}.bn1.beta"), &b.bn1.beta));
            conv(&mut out, &format!("blocks.{i}.conv2"), &b.conv2);
            out.push((format!("blocks.{i}.bn2.gamma"), &b.bn2.gamma));
            out.push((format!("blocks.{i}.bn2.beta"), &b.bn2.beta));
            if let Some(sc) = &b.shortcut {
                conv(&mut out, &format!("blocks.{i}.shortcut"), sc);
            }
        }
        out.push(("head.weight".into(), &self.head.weight));
        out.push(("head.bias".into(), &self.head.bias));
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        self.tensors_mut(false)
    }

    /// Parameters in `parameters` order, optionally followed by buffers in `buffers` order.
    fn tensors_mut(&mut self, with_buffers: bool) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = vec![
            &mut self.stem_conv.weight,
            &mut self.stem_conv.bias,
            &mut self.stem_bn.gamma,
            &mut self.stem_bn.beta,
        ];
        let mut bufs: Vec<&mut Tensor> = vec![
            &mut self.stem_bn.running_mean,
            &mut self.stem_bn.running_var,
        ];
        for b in &mut self.blocks {
            out.extend([
                &mut b.conv1.weight,
                &mut b.conv1.bias,
                &mut b.bn1.gamma,
                &mut b.bn1.beta,
                &mut b.conv2.weight,
                &mut b.conv2.bias,
                &mut b.bn2.gamma,
                &mut b.bn2.beta,
            ]);
            if let Some(sc) = &mut b.shortcut {
                out.extend([&mut sc.weight, &mut sc.bias]);
            }
            bufs.extend([
                &mut b.bn1.running_mean,
                &mut b.bn1.running_var,
                &mut b.bn2.running_mean,
                &mut b.bn2.running_var,
            ]);
        }
        out.extend([&mut self.head.weight, &mut self.head.bias]);
        if with_buffers {
            out.extend(bufs);
        }
        out
    }

    /// Running batch-norm statistics with stable names.
    pub fn buffers(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![
            (
                "stem.bn.running_mean".to_string(),
                &self.stem_bn.running_mean,
            ),
            ("stem.bn.running_var".to_string(), &self.stem_bn.running_var),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            for (name, bn) in [("bn1", &b.bn1), ("bn2", &b.bn2)] {
                out.push((format!("blocks.{i}.{name}.running_mean"), &bn.running_mean));
                out.push((format!("blocks.{i}.{name}.running_var"), &bn.running_var));
            }
        }
        out
    }

    /// Parameters followed by buffers; every tensor a checkpoint must hold.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = self.parameters();
        out.extend(self.buffers());
        out
    }

    pub(crate) fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let names: Vec<String> = self.named_tensors().into_iter().map(|(n, _)| n).collect();
        names.into_iter().zip(self.tensors_mut(true)).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|(_, t)| t.len()).sum()
    }
}
