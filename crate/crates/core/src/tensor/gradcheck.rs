use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Flat index of the element with the largest relative error.
    pub worst_index: usize,
    pub analytic: Tensor,
    pub numeric: Tensor,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tol
    }
}

/// `|a - n| / max(|a|, |n|, 1)`: relative for gradients of magnitude above
/// one, absolute below, so vanishing entries do not amplify rounding noise.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

/// Compares the autodiff gradient of a scalar function against central
/// finite differences `(f(x + h·e) - f(x - h·e)) / 2h`, element by element.
pub fn gradient_check<F>(f: F, x: &Tensor, h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let xv = g.leaf(x.clone(), true);
    let loss = f(&mut g, xv)?;
    g.backward(loss)?;
    let analytic = g
        .grad(xv)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(x.shape().to_vec()));

    let eval = |probe: Tensor| -> Result<f64> {
        let mut g = Graph::new();
        let v = g.leaf(probe, false);
        let out = f(&mut g, v)?;
        let value = g.value(out);
        if !value.is_scalar() {
            return Err(Error::shape(
                "gradient_check",
                "function must be scalar-valued",
            ));
        }
        Ok(value.data()[0])
    };

    let mut numeric = Tensor::zeros(x.shape().to_vec());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = eval(probe.clone())?;
        probe.data_mut()[i] = orig - h;
        let minus = eval(probe.clone())?;
        probe.data_mut()[i] = orig;
        numeric.data_mut()[i] = (plus - minus) / (2.0 * h);
    }

    let mut max_rel_error = 0.0;
    let mut max_abs_error: f64 = 0.0;
    let mut worst_index = 0;
    for (i, (&a, &n)) in analytic.data().iter().zip(numeric.data()).enumerate() {
        let rel = relative_error(a, n);
        max_abs_error = max_abs_error.max((a - n).abs());
        if rel > max_rel_error {
            max_rel_error = rel;
            worst_index = i;
        }
    }
    Ok(GradCheckReport {
        max_rel_error,
        max_abs_error,
        worst_index,
        analytic,
        numeric,
        tol,
    })
}
