use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ShapMatrix;
use crate::data::{DiagnosticClass, Lead};
use crate::error::{Error, Result};
use crate::svg::{heat_color, Svg};

#[derive(Clone, Debug, PartialEq)]
pub struct PatientExplanation {
    pub class: usize,
    /// `[nsteps × n_leads]` attributions for `class`.
    pub values: Vec<f64>,
    pub n_leads: usize,
    /// Σ_t |sv| per lead.
    pub lead_mass: Vec<f64>,
    /// Lead indices, most influential first; ties keep lead order.
    pub lead_ranking: Vec<usize>,
}

impl PatientExplanation {
    pub fn lead_values(&self, lead: usize) -> Vec<f64> {
        self.values
            .iter()
            .skip(lead)
            .step_by(self.n_leads)
            .copied()
            .collect()
    }
}

/// Picks the top-probability class (first on ties) and ranks leads by its attribution mass.
pub fn patient_explanation(sv: &ShapMatrix, probs: &[f64]) -> Result<PatientExplanation> {
    let class = probs
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, p)| match best {
            Some((_, bp)) if *p <= bp => best,
            _ => Some((i, *p)),
        })
        .map(|(i, _)| i)
        .ok_or_else(|| Error::InvalidArgument("empty probability vector".into()))?;
    let values = sv
        .class_values(class)
        .ok_or_else(|| {
            Error::InvalidArgument(format!(
                "class {class} was not explained for {}",
                sv.record_id
            ))
        })?
        .to_vec();
    let k = sv.n_leads;
    let mut lead_mass = vec![0.0; k];
    for (j, v) in values.iter().enumerate() {
        lead_mass[j % k] += v.abs();
    }
    let mut lead_ranking: Vec<usize> = (0..k).collect();
    lead_ranking.sort_by(|a, b| lead_mass[*b].total_cmp(&lead_mass[*a]));
    Ok(PatientExplanation {
        class,
        values,
        n_leads: k,
        lead_mass,
        lead_ranking,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContributionMode {
    Signed,
    #[default]
    Absolute,
}

impl FromStr for ContributionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "signed" => Ok(Self::Signed),
            "absolute" => Ok(Self::Absolute),
            other => Err(Error::UnknownStrategy {
                kind: "contribution mode",
                name: other.into(),
                available: "absolute, signed".into(),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LeadContribution {
    pub mode: ContributionMode,
    /// `c[i][k]`: summed attribution of lead `k` towards class `i`.
    pub c: Vec<Vec<f64>>,
    /// Rows of `c` normalized over leads; `None` where the row sums to zero.
    pub r: Vec<Option<Vec<f64>>>,
    /// Column mean of the defined rows of `r`.
    pub r_bar: Vec<f64>,
    /// Classes whose rows could not be normalized, with the reason.
    pub errors: Vec<(usize, String)>,
}

/// Running per-(class, lead) sums, fed one patient at a time.
#[derive(Clone, Debug)]
pub struct ContributionAccumulator {
    mode: ContributionMode,
    n_leads: usize,
    n_steps: Option<usize>,
    c: Vec<Vec<f64>>,
    seen: Vec<bool>,
}

impl ContributionAccumulator {
    pub fn new(n_classes: usize, n_leads: usize, mode: ContributionMode) -> Self {
        Self {
            mode,
            n_leads,
            n_steps: None,
            c: vec![vec![0.0; n_leads]; n_classes],
            seen: vec![false; n_classes],
        }
    }

    pub fn add(&mut self, sv: &ShapMatrix) -> Result<()> {
        let k = self.n_leads;
        let steps = *self.n_steps.get_or_insert(sv.n_steps);
        if sv.n_leads != k || sv.n_steps != steps {
            return Err(Error::shape(
                "lead_contributions",
                format!(
                    "{} is {}x{}, expected {steps}x{k}",
                    sv.record_id, sv.n_steps, sv.n_leads
                ),
            ));
        }
        if let Some(i) = sv.classes.iter().find(|i| **i >= self.c.len()) {
            return Err(Error::InvalidArgument(format!("class {i} out of range")));
        }
        for &i in &sv.classes {
            self.seen[i] = true;
            for (j, v) in sv.class_values(i).expect("listed class").iter().enumerate() {
                self.c[i][j % k] += match self.mode {
                    ContributionMode::Signed => *v,
                    ContributionMode::Absolute => v.abs(),
                };
            }
        }
        Ok(())
    }

    /// Normalizes each class row over leads and averages the defined rows.
    pub fn finish(self) -> LeadContribution {
        let k = self.n_leads;
        let mut errors = Vec::new();
        let r: Vec<Option<Vec<f64>>> = self
            .c
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let total: f64 = row.iter().sum();
                if !self.seen[i] {
                    errors.push((i, "class not explained".into()));
                    None
                } else if total == 0.0 || !total.is_finite() {
                    errors.push((i, format!("row sum {total} cannot be normalized")));
                    None
                } else {
                    Some(row.iter().map(|v| v / total).collect())
                }
            })
            .collect();
        let defined: Vec<&Vec<f64>> = r.iter().flatten().collect();
        let r_bar = (0..k)
            .map(|lead| {
                if defined.is_empty() {
                    0.0
                } else {
                    defined.iter().map(|row| row[lead]).sum::<f64>() / defined.len() as f64
                }
            })
            .collect();
        for (i, why) in &errors {
            log::warn!("contribution rate for class {i}: {why}");
        }
        LeadContribution {
            mode: self.mode,
            c: self.c,
            r,
            r_bar,
            errors,
        }
    }
}

/// Sums attributions over patients and time per (class, lead), then normalizes each
/// class row over leads and averages the rows.
pub fn lead_contributions(
    svs: &[ShapMatrix],
    n_classes: usize,
    mode: ContributionMode,
) -> Result<LeadContribution> {
    let first = svs
        .first()
        .ok_or_else(|| Error::InvalidArgument("no attribution matrices".into()))?;
    let mut acc = ContributionAccumulator::new(n_classes, first.n_leads, mode);
    for sv in svs {
        acc.add(sv)?;
    }
    Ok(acc.finish())
}

pub struct PopulationReport {
    pub csv: String,
    pub svg: String,
}

fn class_name(i: usize) -> String {
    DiagnosticClass::from_index(i).map_or_else(|| format!("class{i}"), |c| c.code().to_string())
}

/// `class,<leads>` CSV with one row per class plus `AVG`, and the matching SVG heat map.
pub fn population_report(lc: &LeadContribution, leads: &[Lead]) -> Result<PopulationReport> {
    if leads.len() != lc.r_bar.len() {
        return Err(Error::InvalidArgument(format!(
            "{} lead names for {} leads",
            leads.len(),
            lc.r_bar.len()
        )));
    }
    let fmt_row = |name: String, vals: Option<&[f64]>| {
        let mut line = name;
        for k in 0..leads.len() {
            line.push(',');
            match vals {
                Some(v) => line.push_str(&format!("{:.9}", v[k])),
                None => line.push_str("NA"),
            }
        }
        line.push('\n');
        line
    };
    let mut csv = String::from("class");
    for l in leads {
        csv.push(',');
        csv.push_str(l.name());
    }
    csv.push('\n');
    for (i, row) in lc.r.iter().enumerate() {
        csv.push_str(&fmt_row(class_name(i), row.as_deref()));
    }
    csv.push_str(&fmt_row("AVG".into(), Some(&lc.r_bar)));

    const CELL: f64 = 44.0;
    let (x0, y0) = (60.0, 40.0);
    let n_rows = lc.r.len() + 1;
    let mut svg = Svg::new(
        x0 + CELL * leads.len() as f64 + 20.0,
        y0 + CELL * n_rows as f64 + 20.0,
    );
    let max =
        lc.r.iter()
            .flatten()
            .flatten()
            .chain(&lc.r_bar)
            .fold(0.0f64, |m, v| m.max(v.abs()));
    for (k, l) in leads.iter().enumerate() {
        svg.text(
            x0 + CELL * (k as f64 + 0.5),
            y0 - 8.0,
            11.0,
            "middle",
            l.name(),
        );
    }
    let rows =
        lc.r.iter()
            .enumerate()
            .map(|(i, r)| (class_name(i), r.as_deref()))
            .chain(std::iter::once((
                "AVG".to_string(),
                Some(lc.r_bar.as_slice()),
            )));
    for (row_idx, (name, vals)) in rows.enumerate() {
        let y = y0 + CELL * row_idx as f64;
        svg.text(x0 - 6.0, y + CELL / 2.0 + 4.0, 11.0, "end", &name);
        for k in 0..leads.len() {
            let x = x0 + CELL * k as f64;
            match vals {
                Some(v) => {
                    let shade = if max > 0.0 { v[k].abs() / max } else { 0.0 };
                    svg.rect(x, y, CELL, CELL, &heat_color(shade));
                    svg.text(
                        x + CELL / 2.0,
                        y + CELL / 2.0 + 4.0,
                        9.0,
                        "middle",
                        &format!("{:.2}", v[k]),
                    );
                }
                None => svg.rect(x, y, CELL, CELL, "#dddddd"),
            }
        }
    }
    Ok(PopulationReport {
        csv,
        svg: svg.finish(),
    })
}
