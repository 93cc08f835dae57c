use crate::error::Result;
use crate::metrics::{column, f1_score};
use crate::tensor::Tensor;

/// Candidate thresholds 0.01, 0.02, …, 0.99.
pub fn threshold_grid() -> Vec<f64> {
    (1..=99).map(|k| f64::from(k) / 100.0).collect()
}

/// F1 of `score >= t` against binary targets.
pub fn f1_at(scores: &[f64], targets: &[f64], t: f64) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (s, y) in scores.iter().zip(targets) {
        match (*s >= t, *y == 1.0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    f1_score(tp, fp, fn_)
}

/// Per class, the grid threshold with the highest F1; ties go to the smallest.
pub fn select_thresholds(scores: &Tensor, targets: &Tensor) -> Result<Vec<f64>> {
    let (_, c) = scores.dims2("select_thresholds")?;
    if targets.shape() != scores.shape() {
        return Err(crate::Error::Shape {
            op: "select_thresholds",
            message: format!(
                "scores {:?} vs targets {:?}",
                scores.shape(),
                targets.shape()
            ),
        });
    }
    let grid = threshold_grid();
    Ok((0..c)
        .map(|k| {
            let (s, y) = (column(scores, k), column(targets, k));
            let mut best = (grid[0], f1_at(&s, &y, grid[0]));
            for &t in &grid[1..] {
                let f = f1_at(&s, &y, t);
                if f > best.1 {
                    best = (t, f);
                }
            }
            best.0
        })
        .collect())
}
