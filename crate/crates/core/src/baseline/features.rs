use std::path::Path;

use super::wavelet::{dwt, Wavelet};
use crate::data::EcgRecord;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const PERCENTILES: [f64; 5] = [5.0, 25.0, 50.0, 75.0, 95.0];

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

impl FeatureVector {
    fn push(&mut self, name: String, value: f64) {
        self.names.push(name);
        self.values.push(value);
    }

    fn extend(&mut self, other: FeatureVector) {
        self.names.extend(other.names);
        self.values.extend(other.values);
    }
}

/// Linear interpolation between order statistics of an ascending slice: the
/// `p`-th percentile sits at rank `p/100 · (n−1)`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let rank = (p / 100.0).clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = rank.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (rank - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per lead: mean, std, var, min, max and the 5/25/50/75/95th percentiles.
pub fn statistical_features(rec: &EcgRecord) -> FeatureVector {
    let mut fv = FeatureVector {
        names: Vec::new(),
        values: Vec::new(),
    };
    for (lead, row) in rec.leads.iter().zip(&rec.signal) {
        let (mean, std) = mean_std(row);
        let mut sorted = row.clone();
        sorted.sort_by(f64::total_cmp);
        let name = lead.name();
        fv.push(format!("{name}_mean"), mean);
        fv.push(format!("{name}_std"), std);
        fv.push(format!("{name}_var"), std * std);
        fv.push(format!("{name}_min"), sorted[0]);
        fv.push(format!("{name}_max"), sorted[sorted.len() - 1]);
        for p in PERCENTILES {
            fv.push(format!("{name}_p{p:02}"), percentile(&sorted, p));
        }
    }
    fv
}

/// Entropy of the band's normalized energy distribution; 0 for an all-zero band.
pub fn shannon_entropy(band: &[f64]) -> f64 {
    let total: f64 = band.iter().map(|c| c * c).sum();
    if total == 0.0 {
        return 0.0;
    }
    -band
        .iter()
        .map(|c| c * c / total)
        .filter(|p| *p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>()
}

/// Statistical features followed by, per lead and band, mean, std, max, min and entropy.
pub fn wavelet_features(
    rec: &EcgRecord,
    wavelet: &dyn Wavelet,
    levels: usize,
) -> Result<FeatureVector> {
    let mut fv = statistical_features(rec);
    let mut wf = FeatureVector {
        names: Vec::new(),
        values: Vec::new(),
    };
    for (lead, row) in rec.leads.iter().zip(&rec.signal) {
        let bands = dwt(row, wavelet, levels)?;
        for (b, band) in bands.iter().enumerate() {
            let tag = if b == 0 {
                format!("A{levels}")
            } else {
                format!("D{}", levels + 1 - b)
            };
            let prefix = format!("{}_{}_{tag}", lead.name(), wavelet.name());
            let (mean, std) = mean_std(band);
            let (lo, hi) = band
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
                    (a.min(*v), b.max(*v))
                });
            wf.push(format!("{prefix}_mean"), mean);
            wf.push(format!("{prefix}_std"), std);
            wf.push(format!("{prefix}_max"), hi);
            wf.push(format!("{prefix}_min"), lo);
            wf.push(format!("{prefix}_entropy"), shannon_entropy(band));
        }
    }
    fv.extend(wf);
    Ok(fv)
}

/// Features for every record as an `[N, F]` matrix plus the shared names.
pub fn feature_matrix(
    records: &[EcgRecord],
    wavelet: &dyn Wavelet,
    levels: usize,
) -> Result<(Vec<String>, Tensor)> {
    let mut names = None;
    let mut data = Vec::new();
    for r in records {
        let fv = wavelet_features(r, wavelet, levels)?;
        match &names {
            None => names = Some(fv.names),
            Some(n) if *n != fv.names => {
                return Err(Error::InvalidRecord {
                    record_id: r.record_id.clone(),
                    message: "feature layout differs from the first record (lead set mismatch)"
                        .into(),
                })
            }
            Some(_) => {}
        }
        data.extend(fv.values);
    }
    let names = names.ok_or_else(|| Error::InvalidArgument("no records".into()))?;
    let t = Tensor::new([records.len(), names.len()], data)?;
    Ok((names, t))
}

/// `record_id,<feature names>` CSV.
pub fn write_features_csv(
    path: &Path,
    ids: &[&str],
    names: &[String],
    features: &Tensor,
) -> Result<()> {
    let (n, f) = features.dims2("write_features_csv")?;
    if ids.len() != n || names.len() != f {
        return Err(Error::InvalidArgument(
            "feature table dimensions disagree".into(),
        ));
    }
    let mut out = String::from("record_id");
    for name in names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (i, id) in ids.iter().enumerate() {
        out.push_str(id);
        for v in &features.data()[i * f..(i + 1) * f] {
            out.push_str(&format!(",{v:.9e}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
