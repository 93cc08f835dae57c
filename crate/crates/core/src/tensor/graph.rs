use rand::Rng;

use super::ops::{self, ConvGeom};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolKind {
    Avg,
    Max,
}

/// Per-channel batch statistics observed by a train-mode batch norm.
#[derive(Clone, Debug)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Unbiased variance, the quantity folded into running statistics.
    pub var_unbiased: Vec<f64>,
}

enum Op {
    Leaf,
    Conv1d {
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        padding: usize,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        train: bool,
    },
    Relu(Var),
    Sigmoid(Var),
    Dropout {
        x: Var,
        mask: Vec<f64>,
    },
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    AdaptiveAvg(Var),
    AdaptiveMax {
        x: Var,
        argmax: Vec<usize>,
    },
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    Concat {
        a: Var,
        b: Var,
        axis: usize,
    },
    Add(Var, Var),
    Mul(Var, Var),
    Reshape(Var),
    Sum(Var),
    Bce {
        probs: Var,
        targets: Vec<f64>,
    },
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    grad: Option<Tensor>,
    op: Op,
}

/// Reverse-mode tape. Nodes only reference earlier nodes, so the graph is
/// acyclic and reverse index order is a valid topological order.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

const BCE_EPS: f64 = 1e-7;

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf, present after [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            grad: None,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, stride: usize, padding: usize) -> Result<Var> {
        let geom = ConvGeom::new(self.value(x), self.value(w), self.value(b), stride, padding)?;
        let out = ops::conv1d_forward(&geom, self.value(x), self.value(w), self.value(b));
        let rg = self.any_grad(&[x, w, b]);
        Ok(self.push(
            out,
            rg,
            Op::Conv1d {
                x,
                w,
                b,
                stride,
                padding,
            },
        ))
    }

    fn check_bn_params(&self, x: Var, gamma: Var, beta: Var) -> Result<(usize, usize, usize)> {
        let (b, c, l) = self.value(x).dims3("batchnorm1d")?;
        for p in [gamma, beta] {
            if self.value(p).shape() != [c] {
                return Err(Error::shape(
                    "batchnorm1d",
                    format!(
                        "affine parameter shape {:?}, expected [{c}]",
                        self.value(p).shape()
                    ),
                ));
            }
        }
        Ok((b, c, l))
    }

    /// Train-mode batch normalization over the (batch, length) axes of each channel.
    pub fn batchnorm1d_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<(Var, BatchStats)> {
        let (b, c, l) = self.check_bn_params(x, gamma, beta)?;
        let n = b * l;
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "batchnorm1d in train mode needs at least 2 values per channel, got {n}"
            )));
        }
        if eps <= 0.0 {
            return Err(Error::InvalidArgument("batchnorm1d eps must be > 0".into()));
        }
        let xv = self.value(x).data();
        let (gv, bv) = (self.value(gamma).data(), self.value(beta).data());
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for bi in 0..b {
            for ci in 0..c {
                let row = &xv[(bi * c + ci) * l..(bi * c + ci + 1) * l];
                mean[ci] += row.iter().sum::<f64>();
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        for bi in 0..b {
            for ci in 0..c {
                let row = &xv[(bi * c + ci) * l..(bi * c + ci + 1) * l];
                var[ci] += row.iter().map(|v| (v - mean[ci]).powi(2)).sum::<f64>();
            }
        }
        let var_unbiased = var.iter().map(|v| v / (n - 1) as f64).collect();
        var.iter_mut().for_each(|v| *v /= n as f64);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mut xhat = vec![0.0; xv.len()];
        let mut out = vec![0.0; xv.len()];
        for (idx, (&xi, (h, o))) in xv
            .iter()
            .zip(xhat.iter_mut().zip(out.iter_mut()))
            .enumerate()
        {
            let ci = (idx / l) % c;
            *h = (xi - mean[ci]) * inv_std[ci];
            *o = gv[ci] * *h + bv[ci];
        }
        let out = Tensor::new(vec![b, c, l], out)?;
        let rg = self.any_grad(&[x, gamma, beta]);
        let stats = BatchStats { mean, var_unbiased };
        let v = self.push(
            out,
            rg,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train: true,
            },
        );
        Ok((v, stats))
    }

    /// Eval-mode batch normalization using fixed running statistics.
    pub fn batchnorm1d_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &[f64],
        running_var: &[f64],
        eps: f64,
    ) -> Result<Var> {
        let (b, c, l) = self.check_bn_params(x, gamma, beta)?;
        if running_mean.len() != c || running_var.len() != c {
            return Err(Error::shape("batchnorm1d", "running statistics length"));
        }
        let inv_std: Vec<f64> = running_var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let xv = self.value(x).data();
        let (gv, bv) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = vec![0.0; xv.len()];
        let mut out = vec![0.0; xv.len()];
        for (idx, (&xi, (h, o))) in xv
            .iter()
            .zip(xhat.iter_mut().zip(out.iter_mut()))
            .enumerate()
        {
            let ci = (idx / l) % c;
            *h = (xi - running_mean[ci]) * inv_std[ci];
            *o = gv[ci] * *h + bv[ci];
        }
        let out = Tensor::new(vec![b, c, l], out)?;
        let rg = self.any_grad(&[x, gamma, beta]);
        Ok(self.push(
            out,
            rg,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train: false,
            },
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let out = Tensor::new(
            t.shape().to_vec(),
            t.data().iter().map(|v| v.max(0.0)).collect(),
        )
        .expect("same shape");
        let rg = self.any_grad(&[x]);
        self.push(out, rg, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let out = Tensor::new(
            t.shape().to_vec(),
            t.data().iter().map(|&v| sigmoid(v)).collect(),
        )
        .expect("same shape");
        let rg = self.any_grad(&[x]);
        self.push(out, rg, Op::Sigmoid(x))
    }

    /// Inverted dropout. `rng = None` is eval mode (identity).
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, rng: Option<&mut R>) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!(
                "dropout rate must be in [0, 1), got {p}"
            )));
        }
        let rng = match rng {
            Some(r) if p > 0.0 => r,
            _ => return Ok(x),
        };
        let keep = 1.0 / (1.0 - p);
        let t = self.value(x);
        let mask: Vec<f64> = (0..t.len())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let data = t.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let out = Tensor::new(t.shape().to_vec(), data)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, rg, Op::Dropout { x, mask }))
    }

    /// Max-pool along the length axis. Gradient goes to the first maximal index.
    pub fn maxpool1d(
        &mut self,
        x: Var,
        kernel: usize,
        stride: usize,
        ceil_mode: bool,
    ) -> Result<Var> {
        let (_, _, len) = self.value(x).dims3("maxpool1d")?;
        let lout = ops::pool_out_len(len, kernel, stride, ceil_mode).ok_or_else(|| {
            Error::shape(
                "maxpool1d",
                format!("window {kernel} (stride {stride}) exceeds input length {len}"),
            )
        })?;
        let (out, argmax) = ops::maxpool_forward(self.value(x), kernel, stride, lout);
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, rg, Op::MaxPool { x, argmax }))
    }

    /// Global pooling over length: `[B, C, L] -> [B, C, 1]`.
    pub fn adaptive_pool(&mut self, x: Var, kind: PoolKind) -> Result<Var> {
        let (b, c, l) = self.value(x).dims3("adaptive_pool")?;
        if l == 0 {
            return Err(Error::shape("adaptive_pool", "empty length axis"));
        }
        let rows = self.value(x).data().chunks(l);
        let rg = self.any_grad(&[x]);
        match kind {
            PoolKind::Avg => {
                let data = rows.map(|r| r.iter().sum::<f64>() / l as f64).collect();
                let out = Tensor::new(vec![b, c, 1], data)?;
                Ok(self.push(out, rg, Op::AdaptiveAvg(x)))
            }
            PoolKind::Max => {
                let (out, argmax) = ops::maxpool_forward(self.value(x), l, l, 1);
                Ok(self.push(out, rg, Op::AdaptiveMax { x, argmax }))
            }
        }
    }

    /// Affine map `x · wᵀ + b` with `x: [B, F]`, `w: [O, F]`, `b: [O]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (batch, f) = self.value(x).dims2("linear")?;
        let (o, wf) = self.value(w).dims2("linear")?;
        if wf != f || self.value(b).shape() != [o] {
            return Err(Error::shape(
                "linear",
                format!(
                    "x {:?}, w {:?}, b {:?}",
                    self.value(x).shape(),
                    self.value(w).shape(),
                    self.value(b).shape()
                ),
            ));
        }
        let mut out = Vec::with_capacity(batch * o);
        for _ in 0..batch {
            out.extend_from_slice(self.value(b).data());
        }
        ops::gemm(
            batch,
            f,
            o,
            ops::MatRef::rows(self.value(x).data(), f),
            ops::MatRef::transposed(self.value(w).data(), f),
            1.0,
            &mut out,
        );
        let out = Tensor::new(vec![batch, o], out)?;
        let rg = self.any_grad(&[x, w, b]);
        Ok(self.push(out, rg, Op::Linear { x, w, b }))
    }

    pub fn concat(&mut self, a: Var, b: Var, axis: usize) -> Result<Var> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        let compatible = sa.len() == sb.len()
            && axis < sa.len()
            && sa
                .iter()
                .zip(sb)
                .enumerate()
                .all(|(i, (x, y))| i == axis || x == y);
        if !compatible {
            return Err(Error::shape(
                "concat",
                format!("{sa:?} and {sb:?} along axis {axis}"),
            ));
        }
        let outer: usize = sa[..axis].iter().product();
        let inner: usize = sa[axis + 1..].iter().product();
        let (ca, cb) = (sa[axis] * inner, sb[axis] * inner);
        let mut shape = sa.to_vec();
        shape[axis] += sb[axis];
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut data = Vec::with_capacity(da.len() + db.len());
        for o in 0..outer {
            data.extend_from_slice(&da[o * ca..(o + 1) * ca]);
            data.extend_from_slice(&db[o * cb..(o + 1) * cb]);
        }
        let out = Tensor::new(shape, data)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, rg, Op::Concat { a, b, axis }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "add", |x, y| x + y)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, rg, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "mul", |x, y| x * y)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, rg, Op::Mul(a, b)))
    }

    fn zip_same(
        &self,
        a: Var,
        b: Var,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", ta.shape(), tb.shape()),
            ));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn reshape(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, rg, Op::Reshape(x)))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        let rg = self.any_grad(&[x]);
        self.push(out, rg, Op::Sum(x))
    }

    /// Mean binary cross-entropy over every element, probabilities clamped to `[1e-7, 1 - 1e-7]`.
    pub fn bce_loss(&mut self, probs: Var, targets: &Tensor) -> Result<Var> {
        let p = self.value(probs);
        if p.shape() != targets.shape() {
            return Err(Error::shape(
                "bce_loss",
                format!("probs {:?} vs targets {:?}", p.shape(), targets.shape()),
            ));
        }
        let n = p.len().max(1) as f64;
        let total: f64 = p
            .data()
            .iter()
            .zip(targets.data())
            .map(|(&pi, &yi)| {
                let pc = pi.clamp(BCE_EPS, 1.0 - BCE_EPS);
                -(yi * pc.ln() + (1.0 - yi) * (1.0 - pc).ln())
            })
            .sum();
        let rg = self.any_grad(&[probs]);
        Ok(self.push(
            Tensor::scalar(total / n),
            rg,
            Op::Bce {
                probs,
                targets: targets.data().to_vec(),
            },
        ))
    }

    /// Accumulates `∂loss/∂leaf` into every leaf that requires a gradient.
    /// Repeated calls add up until [`Graph::zero_grad`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let value = self.value(loss);
        if !value.is_scalar() {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got shape {:?}", value.shape()),
            ));
        }
        let seed = Tensor::new(value.shape().to_vec(), vec![1.0])?;
        let grads = self.propagate(loss, seed)?;
        for (node, g) in self.nodes.iter_mut().zip(grads) {
            if let (Op::Leaf, true, Some(g)) = (&node.op, node.requires_grad, g) {
                match node.grad.as_mut() {
                    Some(acc) => acc.add_assign(&g),
                    None => node.grad = Some(g),
                }
            }
        }
        Ok(())
    }

    /// Vector-Jacobian product: gradients of `⟨seed, output⟩` with respect to `wrt`.
    /// Does not touch accumulated leaf gradients.
    pub fn vjp(&self, output: Var, seed: Tensor, wrt: &[Var]) -> Result<Vec<Tensor>> {
        if seed.shape() != self.value(output).shape() {
            return Err(Error::shape(
                "vjp",
                format!(
                    "seed {:?} vs output {:?}",
                    seed.shape(),
                    self.value(output).shape()
                ),
            ));
        }
        let mut grads = self.propagate(output, seed)?;
        Ok(wrt
            .iter()
            .map(|v| {
                grads[v.0]
                    .take()
                    .unwrap_or_else(|| Tensor::zeros(self.value(*v).shape().to_vec()))
            })
            .collect())
    }

    fn propagate(&self, output: Var, seed: Tensor) -> Result<Vec<Option<Tensor>>> {
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[output.0].requires_grad {
            return Ok(grads);
        }
        grads[output.0] = Some(seed);
        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if matches!(self.nodes[idx].op, Op::Leaf) {
                grads[idx] = Some(g);
                continue;
            }
            for (input, contrib) in self.input_grads(idx, &g)? {
                match grads[input.0].as_mut() {
                    Some(acc) => acc.add_assign(&contrib),
                    None => grads[input.0] = Some(contrib),
                }
            }
        }
        Ok(grads)
    }

    fn input_grads(&self, idx: usize, g: &Tensor) -> Result<Vec<(Var, Tensor)>> {
        let node = &self.nodes[idx];
        let need = |v: Var| self.nodes[v.0].requires_grad;
        let like = |v: Var, data: Vec<f64>| Tensor::new(self.value(v).shape().to_vec(), data);
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            &Op::Conv1d {
                x,
                w,
                b,
                stride,
                padding,
            } => {
                let geom =
                    ConvGeom::new(self.value(x), self.value(w), self.value(b), stride, padding)?;
                let grads = ops::conv1d_backward(
                    &geom,
                    self.value(x),
                    self.value(w),
                    g,
                    [need(x), need(w), need(b)],
                );
                for (v, t) in [(x, grads.dx), (w, grads.dw), (b, grads.db)] {
                    if let Some(t) = t {
                        out.push((v, t));
                    }
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train,
            } => {
                let (b, c, l) = self.value(*x).dims3("batchnorm1d")?;
                let gv = self.value(*gamma).data();
                let gd = g.data();
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                for (idx, (&gi, &hi)) in gd.iter().zip(xhat).enumerate() {
                    let ci = (idx / l) % c;
                    dgamma[ci] += gi * hi;
                    dbeta[ci] += gi;
                }
                if need(*x) {
                    let n = (b * l) as f64;
                    let dx = gd
                        .iter()
                        .zip(xhat)
                        .enumerate()
                        .map(|(idx, (&gi, &hi))| {
                            let ci = (idx / l) % c;
                            if *train {
                                // dxhat = g·γ; sums over the channel reuse dβ and dγ.
                                gv[ci] * inv_std[ci] / n * (n * gi - dbeta[ci] - hi * dgamma[ci])
                            } else {
                                gi * gv[ci] * inv_std[ci]
                            }
                        })
                        .collect();
                    out.push((*x, like(*x, dx)?));
                }
                if need(*gamma) {
                    out.push((*gamma, like(*gamma, dgamma)?));
                }
                if need(*beta) {
                    out.push((*beta, like(*beta, dbeta)?));
                }
            }
            &Op::Relu(x) => {
                let data = g
                    .data()
                    .iter()
                    .zip(self.value(x).data())
                    .map(|(&gi, &xi)| if xi > 0.0 { gi } else { 0.0 })
                    .collect();
                out.push((x, like(x, data)?));
            }
            &Op::Sigmoid(x) => {
                let data = g
                    .data()
                    .iter()
                    .zip(node.value.data())
                    .map(|(&gi, &s)| gi * s * (1.0 - s))
                    .collect();
                out.push((x, like(x, data)?));
            }
            Op::Dropout { x, mask } => {
                let data = g.data().iter().zip(mask).map(|(gi, m)| gi * m).collect();
                out.push((*x, like(*x, data)?));
            }
            Op::MaxPool { x, argmax } | Op::AdaptiveMax { x, argmax } => {
                let mut data = vec![0.0; self.value(*x).len()];
                for (&gi, &a) in g.data().iter().zip(argmax) {
                    data[a] += gi;
                }
                out.push((*x, like(*x, data)?));
            }
            &Op::AdaptiveAvg(x) => {
                let (_, _, l) = self.value(x).dims3("adaptive_pool")?;
                let data = g
                    .data()
                    .iter()
                    .flat_map(|&gi| std::iter::repeat_n(gi / l as f64, l))
                    .collect();
                out.push((x, like(x, data)?));
            }
            &Op::Linear { x, w, b } => {
                let (batch, f) = self.value(x).dims2("linear")?;
                let (o, _) = self.value(w).dims2("linear")?;
                if need(x) {
                    let mut dx = vec![0.0; batch * f];
                    ops::gemm(
                        batch,
                        o,
                        f,
                        ops::MatRef::rows(g.data(), o),
                        ops::MatRef::rows(self.value(w).data(), f),
                        0.0,
                        &mut dx,
                    );
                    out.push((x, like(x, dx)?));
                }
                if need(w) {
                    let mut dw = vec![0.0; o * f];
                    ops::gemm(
                        o,
                        batch,
                        f,
                        ops::MatRef::transposed(g.data(), o),
                        ops::MatRef::rows(self.value(x).data(), f),
                        0.0,
                        &mut dw,
                    );
                    out.push((w, like(w, dw)?));
                }
                if need(b) {
                    let mut db = vec![0.0; o];
                    for row in g.data().chunks(o) {
                        db.iter_mut().zip(row).for_each(|(d, r)| *d += r);
                    }
                    out.push((b, like(b, db)?));
                }
            }
            &Op::Concat { a, b, axis } => {
                let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
                let outer: usize = sa[..axis].iter().product();
                let inner: usize = sa[axis + 1..].iter().product();
                let (ca, cb) = (sa[axis] * inner, sb[axis] * inner);
                let mut ga = Vec::with_capacity(outer * ca);
                let mut gb = Vec::with_capacity(outer * cb);
                for chunk in g.data().chunks(ca + cb) {
                    ga.extend_from_slice(&chunk[..ca]);
                    gb.extend_from_slice(&chunk[ca..]);
                }
                if need(a) {
                    out.push((a, like(a, ga)?));
                }
                if need(b) {
                    out.push((b, like(b, gb)?));
                }
            }
            &Op::Add(a, b) => {
                for v in [a, b] {
                    if need(v) {
                        out.push((v, g.clone()));
                    }
                }
            }
            &Op::Mul(a, b) => {
                for (v, other) in [(a, b), (b, a)] {
                    if need(v) {
                        let data = g
                            .data()
                            .iter()
                            .zip(self.value(other).data())
                            .map(|(gi, oi)| gi * oi)
                            .collect();
                        out.push((v, like(v, data)?));
                    }
                }
            }
            &Op::Reshape(x) => out.push((x, like(x, g.data().to_vec())?)),
            &Op::Sum(x) => {
                let n = self.value(x).len();
                out.push((x, like(x, vec![g.data()[0]; n])?));
            }
            Op::Bce { probs, targets } => {
                let p = self.value(*probs).data();
                let scale = g.data()[0] / p.len().max(1) as f64;
                let data = p
                    .iter()
                    .zip(targets)
                    .map(|(&pi, &yi)| {
                        if !(BCE_EPS..=1.0 - BCE_EPS).contains(&pi) {
                            0.0
                        } else {
                            scale * (pi - yi) / (pi * (1.0 - pi))
                        }
                    })
                    .collect();
                out.push((*probs, like(*probs, data)?));
            }
        }
        Ok(out)
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}
