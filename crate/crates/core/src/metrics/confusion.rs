use super::confusion_counts;
use crate::error::Result;
use crate::svg::{heat_color, Svg};
use crate::tensor::Tensor;

/// Row-normalized 2×2 matrix: rows are truth (negative, positive), columns are
/// prediction. A row with no samples is `None`.
pub type RateMatrix = [[Option<f64>; 2]; 2];

pub fn multilabel_confusion_matrix(preds: &Tensor, targets: &Tensor) -> Result<Vec<RateMatrix>> {
    let cells = confusion_counts(preds, targets)?;
    let row = |a: usize, b: usize| {
        let n = a + b;
        if n == 0 {
            [None, None]
        } else {
            [Some(a as f64 / n as f64), Some(b as f64 / n as f64)]
        }
    };
    Ok(cells
        .iter()
        .map(|c| [row(c.tn, c.fp), row(c.fn_, c.tp)])
        .collect())
}

/// One small heat-mapped 2×2 panel per class, laid out in rows of five.
pub fn render_confusion_svg(matrices: &[RateMatrix], class_names: &[&str]) -> String {
    const CELL: f64 = 48.0;
    const PANEL_W: f64 = 2.0 * CELL + 50.0;
    const PANEL_H: f64 = 2.0 * CELL + 60.0;
    const PER_ROW: usize = 5;
    let n_rows = matrices.len().div_ceil(PER_ROW).max(1);
    let mut svg = Svg::new(
        PANEL_W * PER_ROW.min(matrices.len().max(1)) as f64 + 10.0,
        PANEL_H * n_rows as f64 + 10.0,
    );
    for (idx, m) in matrices.iter().enumerate() {
        let ox = 10.0 + PANEL_W * (idx % PER_ROW) as f64 + 30.0;
        let oy = 10.0 + PANEL_H * (idx / PER_ROW) as f64 + 20.0;
        let name = class_names.get(idx).copied().unwrap_or("?");
        svg.open_group("confusion");
        svg.text(ox + CELL, oy - 6.0, 12.0, "middle", name);
        for (r, row) in m.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                let (x, y) = (ox + c as f64 * CELL, oy + r as f64 * CELL);
                match v {
                    Some(v) => {
                        svg.rect(x, y, CELL, CELL, &heat_color(*v));
                        svg.text(
                            x + CELL / 2.0,
                            y + CELL / 2.0 + 4.0,
                            11.0,
                            "middle",
                            &format!("{v:.2}"),
                        );
                    }
                    None => {
                        svg.rect(x, y, CELL, CELL, "#dddddd");
                        svg.text(x + CELL / 2.0, y + CELL / 2.0 + 4.0, 11.0, "middle", "n/a");
                    }
                }
            }
        }
        svg.text(ox - 4.0, oy + CELL / 2.0 + 4.0, 9.0, "end", "N");
        svg.text(ox - 4.0, oy + 1.5 * CELL + 4.0, 9.0, "end", "P");
        svg.text(
            ox + CELL / 2.0,
            oy + 2.0 * CELL + 12.0,
            9.0,
            "middle",
            "pred N",
        );
        svg.text(
            ox + 1.5 * CELL,
            oy + 2.0 * CELL + 12.0,
            9.0,
            "middle",
            "pred P",
        );
        svg.close_group();
    }
    svg.finish()
}
