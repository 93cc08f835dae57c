use super::PatientExplanation;
use crate::baseline::percentile;
use crate::data::{DiagnosticClass, EcgRecord};
use crate::error::{Error, Result};
use crate::svg::Svg;

const PANEL_W: f64 = 900.0;
const PANEL_H: f64 = 160.0;
const MARGIN_L: f64 = 60.0;
const MARGIN_T: f64 = 36.0;

/// Plots the last `window_seconds` of the `leads_to_show` most influential leads.
/// Samples whose |attribution| exceeds the 95th percentile of that lead's
/// |attributions| (over the whole record) are overdrawn in red.
pub fn render_explanation_svg(
    rec: &EcgRecord,
    expl: &PatientExplanation,
    leads_to_show: usize,
    window_seconds: f64,
) -> Result<String> {
    let n = rec.n_samples();
    if expl.n_leads != rec.n_leads() || expl.values.len() != n * rec.n_leads() {
        return Err(Error::shape(
            "render_explanation_svg",
            format!(
                "attributions cover {} leads x {} samples, record is {}x{n}",
                expl.n_leads,
                expl.values.len() / expl.n_leads.max(1),
                rec.n_leads()
            ),
        ));
    }
    let window = (window_seconds * rec.fs).round() as usize;
    if window == 0 || window > n {
        return Err(Error::InvalidArgument(format!(
            "window of {window_seconds} s ({window} samples) does not fit a {n}-sample record"
        )));
    }
    let shown: Vec<usize> = expl
        .lead_ranking
        .iter()
        .take(leads_to_show.max(1))
        .copied()
        .collect();
    let start = n - window;
    let mut svg = Svg::new(
        MARGIN_L + PANEL_W + 20.0,
        MARGIN_T + PANEL_H * shown.len() as f64 + 30.0,
    );
    let title = DiagnosticClass::from_index(expl.class)
        .map_or_else(|| format!("class {}", expl.class), |c| c.code().into());
    svg.text(
        MARGIN_L,
        20.0,
        14.0,
        "start",
        &format!(
            "{}: prediction {title}, last {window_seconds} s",
            rec.record_id
        ),
    );

    for (row, &lead) in shown.iter().enumerate() {
        let signal = &rec.signal[lead][start..];
        let attr = expl.lead_values(lead);
        let mut mags: Vec<f64> = attr.iter().map(|a| a.abs()).collect();
        mags.sort_by(f64::total_cmp);
        let cut = percentile(&mags, 95.0);
        let top = MARGIN_T + PANEL_H * row as f64;
        let (lo, hi) = signal
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
                (a.min(*v), b.max(*v))
            });
        let span = if hi > lo { hi - lo } else { 1.0 };
        let px = |i: usize| MARGIN_L + PANEL_W * i as f64 / (window.max(2) - 1) as f64;
        let py = |v: f64| top + 10.0 + (PANEL_H - 40.0) * (1.0 - (v - lo) / span);

        svg.open_group("lead");
        svg.text(
            MARGIN_L - 8.0,
            top + PANEL_H / 2.0,
            12.0,
            "end",
            rec.leads[lead].name(),
        );
        svg.line(
            MARGIN_L,
            top + PANEL_H - 30.0,
            MARGIN_L + PANEL_W,
            top + PANEL_H - 30.0,
            "#999",
        );
        svg.line(MARGIN_L, top + 10.0, MARGIN_L, top + PANEL_H - 30.0, "#999");
        svg.text(
            MARGIN_L - 4.0,
            py(hi) + 4.0,
            9.0,
            "end",
            &format!("{hi:.2} mV"),
        );
        svg.text(
            MARGIN_L - 4.0,
            py(lo) + 4.0,
            9.0,
            "end",
            &format!("{lo:.2} mV"),
        );
        let secs = window as f64 / rec.fs;
        for tick in 0..=(secs.floor() as usize) {
            let x = MARGIN_L + PANEL_W * tick as f64 / secs;
            svg.text(x, top + PANEL_H - 16.0, 9.0, "middle", &format!("{tick} s"));
        }
        let points: Vec<(f64, f64)> = signal
            .iter()
            .enumerate()
            .map(|(i, v)| (px(i), py(*v)))
            .collect();
        svg.polyline(&points, "#1f3a93", 1.0, "signal");

        // Contiguous runs of highlighted samples.
        let mut i = 0;
        while i < window {
            if attr[start + i].abs() > cut {
                let run_start = i;
                while i < window && attr[start + i].abs() > cut {
                    i += 1;
                }
                let mut run: Vec<(f64, f64)> = points[run_start..i].to_vec();
                if run.len() == 1 {
                    run.push((run[0].0 + 1.0, run[0].1));
                }
                svg.polyline(&run, "#d62728", 2.5, "highlight");
            } else {
                i += 1;
            }
        }
        svg.close_group();
    }
    Ok(svg.finish())
}
