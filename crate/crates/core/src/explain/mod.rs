//! Expected-gradients attribution, patient-level explanations, lead
//! contribution rates and their renderings.

mod contrib;
mod render;

pub use contrib::{
    lead_contributions, patient_explanation, population_report, ContributionAccumulator,
    ContributionMode, LeadContribution, PatientExplanation, PopulationReport,
};
pub use render::render_explanation_svg;

use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ForwardCtx, Mode, Network};
use crate::seed;
use crate::tensor::{Graph, Tensor};

/// A differentiable model with `n_outputs` scalar outputs per input.
pub trait Scorer {
    fn n_outputs(&self) -> usize;

    /// Outputs `[B, n_outputs]` for inputs `[B, C, L]`.
    fn predict(&self, x: &Tensor) -> Result<Tensor>;

    /// For each requested output `i`, the per-input gradients `∂f_i(x_b)/∂x_b`, shaped like `x`.
    /// Inputs must not interact (eval mode).
    fn input_gradients(&self, x: &Tensor, outputs: &[usize]) -> Result<Vec<Tensor>>;
}

impl Scorer for Network {
    fn n_outputs(&self) -> usize {
        self.cfg.n_classes
    }

    fn predict(&self, x: &Tensor) -> Result<Tensor> {
        Network::predict(self, x)
    }

    fn input_gradients(&self, x: &Tensor, outputs: &[usize]) -> Result<Vec<Tensor>> {
        let mut g = Graph::new();
        let xv = g.leaf(x.clone(), true);
        let mut ctx = ForwardCtx::new(Mode::Eval, false);
        let probs = self.forward(&mut g, xv, &mut ctx)?;
        let (b, o) = g.value(probs).dims2("input_gradients")?;
        outputs
            .iter()
            .map(|&i| {
                let seed = Tensor::from_fn([b, o], |j| f64::from(u8::from(j % o == i)));
                Ok(g.vjp(probs, seed, &[xv])?.remove(0))
            })
            .collect()
    }
}

/// `f_i(x) = Σ w_i ∘ x + b_i`.
#[derive(Clone, Debug)]
pub struct LinearScorer {
    /// `[O, C, L]`.
    pub weights: Tensor,
    pub bias: Vec<f64>,
}

impl Scorer for LinearScorer {
    fn n_outputs(&self) -> usize {
        self.weights.shape()[0]
    }

    fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let (b, c, l) = x.dims3("LinearScorer")?;
        let o = self.n_outputs();
        if self.weights.shape()[1..] != [c, l] {
            return Err(Error::shape(
                "LinearScorer",
                format!("input [{c}, {l}] vs weights {:?}", self.weights.shape()),
            ));
        }
        let w = self.weights.data();
        Ok(Tensor::from_fn([b, o], |idx| {
            let (bi, i) = (idx / o, idx % o);
            let xs = &x.data()[bi * c * l..(bi + 1) * c * l];
            let ws = &w[i * c * l..(i + 1) * c * l];
            xs.iter().zip(ws).map(|(a, b)| a * b).sum::<f64>() + self.bias[i]
        }))
    }

    fn input_gradients(&self, x: &Tensor, outputs: &[usize]) -> Result<Vec<Tensor>> {
        let (b, c, l) = x.dims3("LinearScorer")?;
        Ok(outputs
            .iter()
            .map(|&i| {
                let ws = &self.weights.data()[i * c * l..(i + 1) * c * l];
                Tensor::from_fn([b, c, l], |j| ws[j % (c * l)])
            })
            .collect())
    }
}

/// How the Monte Carlo pairs `(x'_m, α_m)` are drawn. Both keep each `x'_m`
/// uniform over the background and each `α_m` uniform on (0, 1).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    /// Independent draws.
    Iid,
    /// Background points dealt cyclically from a shuffled order; `α` stratified over
    /// M equal bins, with the copies of one background point spread over `ceil(M/N)` bands.
    #[default]
    Stratified,
}

impl FromStr for Sampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "iid" => Ok(Self::Iid),
            "stratified" => Ok(Self::Stratified),
            other => Err(Error::UnknownStrategy {
                kind: "sampling scheme",
                name: other.into(),
                available: "iid, stratified".into(),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplainConfig {
    /// Monte Carlo samples M.
    pub n_samples: usize,
    pub sampling: Sampling,
    /// Interpolated inputs per forward/backward pass.
    pub batch: usize,
    pub seed: u64,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            n_samples: 200,
            sampling: Sampling::Stratified,
            batch: 50,
            seed: 0,
        }
    }
}

/// Attributions laid out `[class][time][lead]`, for the classes in `classes`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapMatrix {
    pub record_id: String,
    pub classes: Vec<usize>,
    pub n_steps: usize,
    pub n_leads: usize,
    pub values: Vec<f64>,
    pub background: String,
    pub n_mc_samples: usize,
}

impl ShapMatrix {
    /// `[nsteps × n_leads]` block for class `class`, if it was computed.
    pub fn class_values(&self, class: usize) -> Option<&[f64]> {
        let pos = self.classes.iter().position(|c| *c == class)?;
        let block = self.n_steps * self.n_leads;
        Some(&self.values[pos * block..(pos + 1) * block])
    }

    pub fn get(&self, class: usize, step: usize, lead: usize) -> Option<f64> {
        self.class_values(class)
            .map(|v| v[step * self.n_leads + lead])
    }

    /// Σ over time and leads for `class`.
    pub fn total(&self, class: usize) -> Option<f64> {
        self.class_values(class).map(|v| v.iter().sum())
    }
}

/// Expected gradients of the scorer's outputs at `x` (`[C, L]` or `[1, C, L]`)
/// against `background` (`[N, C, L]`). `outputs = None` explains every output.
pub fn expected_gradients(
    scorer: &dyn Scorer,
    record_id: &str,
    x: &Tensor,
    background: &Tensor,
    cfg: &ExplainConfig,
    outputs: Option<&[usize]>,
) -> Result<ShapMatrix> {
    let (n_bg, c, l) = background.dims3("expected_gradients")?;
    if n_bg == 0 {
        return Err(Error::InvalidArgument("empty background set".into()));
    }
    if x.len() != c * l || !(x.shape() == [c, l] || x.shape() == [1, c, l]) {
        return Err(Error::shape(
            "expected_gradients",
            format!(
                "input {:?} vs background {:?}",
                x.shape(),
                background.shape()
            ),
        ));
    }
    if cfg.n_samples == 0 {
        return Err(Error::InvalidArgument(
            "need at least one Monte Carlo sample".into(),
        ));
    }
    let all: Vec<usize> = (0..scorer.n_outputs()).collect();
    let outputs = outputs.unwrap_or(&all);
    if let Some(bad) = outputs.iter().find(|o| **o >= scorer.n_outputs()) {
        return Err(Error::InvalidArgument(format!("output {bad} out of range")));
    }

    let m = cfg.n_samples;
    let mut rng = seed::rng(cfg.seed, &format!("explain/{record_id}"));
    let (bg_index, alphas): (Vec<usize>, Vec<f64>) = match cfg.sampling {
        Sampling::Iid => (0..m)
            .map(|_| (rng.random_range(0..n_bg), rng.random::<f64>()))
            .unzip(),
        Sampling::Stratified => {
            let mut order: Vec<usize> = (0..n_bg).collect();
            order.shuffle(&mut rng);
            // Sample i pairs with background slot i % n_bg. A slot's copies land in
            // distinct bands of (0, 1), so each path is integrated by stratified quadrature.
            let bands = m.div_ceil(n_bg);
            let mut band = vec![0; m];
            for j in 0..n_bg.min(m) {
                let mut perm: Vec<usize> = (0..bands).collect();
                perm.shuffle(&mut rng);
                for (r, i) in (j..m).step_by(n_bg).enumerate() {
                    band[i] = perm[r];
                }
            }
            // Within a band, one sub-stratum per sample.
            let mut members = vec![Vec::new(); bands];
            for (i, b) in band.iter().enumerate() {
                members[*b].push(i);
            }
            let mut alphas = vec![0.0; m];
            for (b, ids) in members.iter_mut().enumerate() {
                ids.shuffle(&mut rng);
                let n = ids.len() as f64;
                for (s, &i) in ids.iter().enumerate() {
                    alphas[i] = (b as f64 + (s as f64 + rng.random::<f64>()) / n) / bands as f64;
                }
            }
            ((0..m).map(|i| order[i % n_bg]).collect(), alphas)
        }
    };

    let cl = c * l;
    let xd = &x.data()[..cl];
    let mut acc = vec![vec![0.0; cl]; outputs.len()];
    for start in (0..m).step_by(cfg.batch.max(1)) {
        let end = (start + cfg.batch.max(1)).min(m);
        let mut z = Vec::with_capacity((end - start) * cl);
        for s in start..end {
            let bg = &background.data()[bg_index[s] * cl..(bg_index[s] + 1) * cl];
            z.extend(xd.iter().zip(bg).map(|(xi, bi)| bi + alphas[s] * (xi - bi)));
        }
        let z = Tensor::new([end - start, c, l], z)?;
        let grads = scorer.input_gradients(&z, outputs)?;
        for (a, g) in acc.iter_mut().zip(&grads) {
            for s in start..end {
                let bg = &background.data()[bg_index[s] * cl..(bg_index[s] + 1) * cl];
                let gs = &g.data()[(s - start) * cl..(s - start + 1) * cl];
                for (((ai, gi), xi), bi) in a.iter_mut().zip(gs).zip(xd).zip(bg) {
                    *ai += (xi - bi) * gi;
                }
            }
        }
    }

    // [lead][time] accumulators into [class][time][lead].
    let mut values = vec![0.0; outputs.len() * cl];
    for (o, a) in acc.iter().enumerate() {
        for lead in 0..c {
            for t in 0..l {
                values[o * cl + t * c + lead] = a[lead * l + t] / m as f64;
            }
        }
    }
    Ok(ShapMatrix {
        record_id: record_id.into(),
        classes: outputs.to_vec(),
        n_steps: l,
        n_leads: c,
        values,
        background: format!("{n_bg} background inputs"),
        n_mc_samples: m,
    })
}
