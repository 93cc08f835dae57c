use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam with one moment pair per parameter tensor.
#[derive(Clone, Debug)]
pub struct Adam {
    pub cfg: AdamConfig,
    /// Number of steps taken so far.
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Self {
            cfg,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Applies one update in place. `params` and `grads` must keep the same order
    /// and shapes across calls.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[&Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::InvalidArgument(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            return Err(Error::InvalidArgument(
                "parameter list changed between steps".into(),
            ));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.shape() != g.shape() || m.len() != p.len() {
                return Err(Error::Shape {
                    op: "adam",
                    message: format!("param {:?} vs grad {:?}", p.shape(), g.shape()),
                });
            }
        }
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((w, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step1(w: &mut Tensor, g: &Tensor, adam: &mut Adam) {
        adam.step(&mut [w], &[g]).unwrap();
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut adam = Adam::new(AdamConfig::with_lr(1e-3));
        let mut w = Tensor::new([3], vec![1.0, 1.0, 1.0]).unwrap();
        let g = Tensor::new([3], vec![0.5, -2.0, 1e-3]).unwrap();
        step1(&mut w, &g, &mut adam);
        for (wi, gi) in w.data().iter().zip(g.data()) {
            let expected = 1e-3 * gi.abs() / (gi.abs() + 1e-8);
            assert!(((1.0 - wi) * gi.signum() - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut adam = Adam::new(AdamConfig::with_lr(0.1));
        let mut w = Tensor::new([2], vec![0.3, -4.0]).unwrap();
        let g = Tensor::zeros([2]);
        for _ in 0..5 {
            step1(&mut w, &g, &mut adam);
        }
        assert_eq!(w.data(), &[0.3, -4.0]);
    }

    #[test]
    fn quadratic_bowl_converges() {
        let mut adam = Adam::new(AdamConfig::with_lr(0.1));
        let mut w = Tensor::new([1], vec![1.0]).unwrap();
        for _ in 0..200 {
            let g = Tensor::new([1], vec![2.0 * w.data()[0]]).unwrap();
            step1(&mut w, &g, &mut adam);
        }
        assert!(w.data()[0].abs() < 0.05, "{}", w.data()[0]);
        assert_eq!(adam.t, 200);
    }

    #[test]
    fn matches_hand_rolled_second_step() {
        let mut adam = Adam::new(AdamConfig::with_lr(0.01));
        let mut w = Tensor::new([1], vec![0.0]).unwrap();
        step1(&mut w, &Tensor::new([1], vec![1.0]).unwrap(), &mut adam);
        step1(&mut w, &Tensor::new([1], vec![3.0]).unwrap(), &mut adam);
        let (m1, v1) = (0.1, 0.001);
        let (m2, v2) = (0.9 * m1 + 0.1 * 3.0, 0.999 * v1 + 0.001 * 9.0);
        let step2 = 0.01 * (m2 / (1.0 - 0.81)) / ((v2 / (1.0 - 0.999f64.powi(2))).sqrt() + 1e-8);
        let step1 = 0.01 * 1.0 / (1.0 + 1e-8);
        assert!((w.data()[0] + step1 + step2).abs() < 1e-12);
    }

    #[test]
    fn mismatched_inputs_error() {
        let mut adam = Adam::new(AdamConfig::with_lr(0.1));
        let mut w = Tensor::zeros([2]);
        assert!(adam.step(&mut [&mut w], &[]).is_err());
        assert!(adam.step(&mut [&mut w], &[&Tensor::zeros([3])]).is_err());
    }
}
