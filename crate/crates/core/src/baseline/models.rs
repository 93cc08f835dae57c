use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::{sigmoid, Graph, Tensor};
use crate::train::{Adam, AdamConfig};

/// Column z-scoring fitted on training data. Zero-variance columns are dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub keep: Vec<usize>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub n_input: usize,
}

impl Standardizer {
    pub fn fit(x: &Tensor) -> Result<Self> {
        let (n, f) = x.dims2("Standardizer")?;
        if n == 0 {
            return Err(Error::InvalidArgument("no training rows".into()));
        }
        let (mut keep, mut mean, mut std) = (Vec::new(), Vec::new(), Vec::new());
        for j in 0..f {
            let col: Vec<f64> = (0..n).map(|i| x.data()[i * f + j]).collect();
            let m = col.iter().sum::<f64>() / n as f64;
            let s = (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64).sqrt();
            if s > 1e-12 * m.abs().max(1.0) {
                keep.push(j);
                mean.push(m);
                std.push(s);
            }
        }
        if keep.len() < f {
            log::warn!(
                "dropping {} zero-variance feature column(s)",
                f - keep.len()
            );
        }
        Ok(Self {
            keep,
            mean,
            std,
            n_input: f,
        })
    }

    pub fn transform(&self, x: &Tensor) -> Result<Tensor> {
        let (n, f) = x.dims2("Standardizer")?;
        if f != self.n_input {
            return Err(Error::shape(
                "Standardizer",
                format!("{f} columns, fitted on {}", self.n_input),
            ));
        }
        let k = self.keep.len();
        Ok(Tensor::from_fn([n, k], |idx| {
            let (i, j) = (idx / k, idx % k);
            (x.data()[i * f + self.keep[j]] - self.mean[j]) / self.std[j]
        }))
    }
}

/// A multi-output classifier on feature matrices.
pub trait BaselineClassifier: Send {
    fn name(&self) -> &'static str;
    /// `x`: `[N, F]` raw features; `y`: `[N, C]` multi-hot targets.
    fn fit(&mut self, x: &Tensor, y: &Tensor) -> Result<()>;
    /// `[N, C]` scores in (0, 1).
    fn predict(&self, x: &Tensor) -> Result<Tensor>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineParams {
    pub l2: f64,
    pub lr: f64,
    pub epochs: usize,
    pub hidden: usize,
    pub mlp_lr: f64,
    pub mlp_epochs: usize,
    pub seed: u64,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self {
            l2: 1e-3,
            lr: 0.5,
            epochs: 500,
            hidden: 64,
            mlp_lr: 1e-2,
            mlp_epochs: 500,
            seed: 0,
        }
    }
}

/// Mean binary cross-entropy of one logistic unit plus `l2/2 · ‖w‖²`, and its gradient.
pub fn logistic_loss_and_grad(
    x: &Tensor,
    y: &[f64],
    w: &[f64],
    b: f64,
    l2: f64,
) -> Result<(f64, Vec<f64>, f64)> {
    let (n, f) = x.dims2("logistic_loss")?;
    if y.len() != n || w.len() != f {
        return Err(Error::shape(
            "logistic_loss",
            format!("x [{n}, {f}], y {}, w {}", y.len(), w.len()),
        ));
    }
    let mut loss = 0.0;
    let mut gw = vec![0.0; f];
    let mut gb = 0.0;
    for i in 0..n {
        let row = &x.data()[i * f..(i + 1) * f];
        let z = row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + b;
        // log(1 + e^z) − y·z, stable for both signs of z.
        loss += z.max(0.0) + (-z.abs()).exp().ln_1p() - y[i] * z;
        let r = sigmoid(z) - y[i];
        for (g, xi) in gw.iter_mut().zip(row) {
            *g += r * xi;
        }
        gb += r;
    }
    let nf = n as f64;
    loss = loss / nf + 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>();
    for (g, wi) in gw.iter_mut().zip(w) {
        *g = *g / nf + l2 * wi;
    }
    Ok((loss, gw, gb / nf))
}

/// One-vs-rest logistic regression, full-batch gradient descent from zero weights.
pub struct LogisticBaseline {
    pub params: BaselineParams,
    pub scaler: Option<Standardizer>,
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl LogisticBaseline {
    pub fn new(params: BaselineParams) -> Self {
        Self {
            params,
            scaler: None,
            weights: Vec::new(),
            bias: Vec::new(),
        }
    }
}

impl BaselineClassifier for LogisticBaseline {
    fn name(&self) -> &'static str {
        "lr"
    }

    fn fit(&mut self, x: &Tensor, y: &Tensor) -> Result<()> {
        let scaler = Standardizer::fit(x)?;
        let xs = scaler.transform(x)?;
        let (n, c) = y.dims2("LogisticBaseline")?;
        let f = xs.shape()[1];
        self.weights.clear();
        self.bias.clear();
        for k in 0..c {
            let yk: Vec<f64> = (0..n).map(|i| y.data()[i * c + k]).collect();
            let (mut w, mut b) = (vec![0.0; f], 0.0);
            for _ in 0..self.params.epochs {
                let (_, gw, gb) = logistic_loss_and_grad(&xs, &yk, &w, b, self.params.l2)?;
                for (wi, gi) in w.iter_mut().zip(&gw) {
                    *wi -= self.params.lr * gi;
                }
                b -= self.params.lr * gb;
            }
            self.weights.push(w);
            self.bias.push(b);
        }
        self.scaler = Some(scaler);
        Ok(())
    }

    fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let scaler = self
            .scaler
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("logistic baseline is not fitted".into()))?;
        let xs = scaler.transform(x)?;
        let (n, f) = xs.dims2("LogisticBaseline")?;
        let c = self.weights.len();
        Ok(Tensor::from_fn([n, c], |idx| {
            let (i, k) = (idx / c, idx % c);
            let row = &xs.data()[i * f..(i + 1) * f];
            sigmoid(
                row.iter()
                    .zip(&self.weights[k])
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    + self.bias[k],
            )
        }))
    }
}

/// One relu hidden layer and sigmoid outputs, trained full-batch with Adam on mean BCE.
pub struct MlpBaseline {
    pub params: BaselineParams,
    pub scaler: Option<Standardizer>,
    /// `w1 [H, F]`, `b1 [H]`, `w2 [C, H]`, `b2 [C]`.
    pub layers: Vec<Tensor>,
}

impl MlpBaseline {
    pub fn new(params: BaselineParams) -> Result<Self> {
        if params.hidden == 0 {
            return Err(Error::Config("MLP hidden size must be >= 1".into()));
        }
        Ok(Self {
            params,
            scaler: None,
            layers: Vec::new(),
        })
    }

    fn forward(
        &self,
        g: &mut Graph,
        x: Tensor,
        grads: bool,
    ) -> Result<(Vec<crate::tensor::Var>, crate::tensor::Var)> {
        let xv = g.constant(x);
        let vars: Vec<_> = self
            .layers
            .iter()
            .map(|t| g.leaf(t.clone(), grads))
            .collect();
        let h = g.linear(xv, vars[0], vars[1])?;
        let h = g.relu(h);
        let o = g.linear(h, vars[2], vars[3])?;
        Ok((vars, g.sigmoid(o)))
    }
}

impl BaselineClassifier for MlpBaseline {
    fn name(&self) -> &'static str {
        "mlp"
    }

    fn fit(&mut self, x: &Tensor, y: &Tensor) -> Result<()> {
        let scaler = Standardizer::fit(x)?;
        let xs = scaler.transform(x)?;
        let f = xs.shape()[1];
        let (_, c) = y.dims2("MlpBaseline")?;
        let h = self.params.hidden;
        let mut rng = seed::rng(self.params.seed, "mlp/init");
        let mut uniform = |shape: [usize; 2], fan_in: usize| {
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            Tensor::from_fn(shape, |_| rng.random_range(-bound..bound))
        };
        let w1 = uniform([h, f], f);
        let b1 = uniform([1, h], f).reshape([h])?;
        let w2 = uniform([c, h], h);
        let b2 = uniform([1, c], h).reshape([c])?;
        self.layers = vec![w1, b1, w2, b2];
        let mut adam = Adam::new(AdamConfig::with_lr(self.params.mlp_lr));
        for _ in 0..self.params.mlp_epochs {
            let mut g = Graph::new();
            let (vars, probs) = self.forward(&mut g, xs.clone(), true)?;
            let loss = g.bce_loss(probs, y)?;
            g.backward(loss)?;
            let grads: Vec<&Tensor> = vars
                .iter()
                .map(|v| g.grad(*v).expect("trainable leaf"))
                .collect();
            let mut params: Vec<&mut Tensor> = self.layers.iter_mut().collect();
            adam.step(&mut params, &grads)?;
        }
        self.scaler = Some(scaler);
        Ok(())
    }

    fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let scaler = self
            .scaler
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("MLP baseline is not fitted".into()))?;
        let mut g = Graph::new();
        let (_, probs) = self.forward(&mut g, scaler.transform(x)?, false)?;
        Ok(g.value(probs).clone())
    }
}

type Factory = Box<dyn Fn(&BaselineParams) -> Result<Box<dyn BaselineClassifier>> + Send + Sync>;

/// Baseline classifiers by name.
pub struct BaselineRegistry {
    items: BTreeMap<String, Factory>,
}

impl BaselineRegistry {
    pub fn empty() -> Self {
        Self {
            items: BTreeMap::new(),
        }
    }

    /// `lr` and `mlp`; `rf` and `gbt` are listed but refuse to build.
    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register(
            "lr",
            Box::new(|p| Ok(Box::new(LogisticBaseline::new(p.clone())))),
        );
        r.register(
            "mlp",
            Box::new(|p| Ok(Box::new(MlpBaseline::new(p.clone())?))),
        );
        for (name, long) in [("rf", "random forest"), ("gbt", "gradient-boosted trees")] {
            r.register(
                name,
                Box::new(move |_| {
                    Err(Error::OutOfScope(format!(
                        "baseline `{name}` ({long}) is out of scope: tree ensembles are not implemented; use `lr` or `mlp`"
                    )))
                }),
            );
        }
        r
    }

    pub fn register(&mut self, name: &str, factory: Factory) {
        self.items.insert(name.to_ascii_lowercase(), factory);
    }

    pub fn build(
        &self,
        name: &str,
        params: &BaselineParams,
    ) -> Result<Box<dyn BaselineClassifier>> {
        let factory =
            self.items
                .get(&name.to_ascii_lowercase())
                .ok_or_else(|| Error::UnknownStrategy {
                    kind: "baseline model",
                    name: name.into(),
                    available: self.names().join(", "),
                })?;
        factory(params)
    }

    pub fn names(&self) -> Vec<&str> {
        self.items.keys().map(String::as_str).collect()
    }
}
