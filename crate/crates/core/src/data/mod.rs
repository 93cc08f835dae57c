//! ECG records, the on-disk dataset formats, preprocessing and augmentation.

mod manifest;
mod preprocess;
pub mod synth;

pub use manifest::{
    load_manifest, load_record, write_record, DatasetManifest, ManifestEntry, DEFAULT_FS,
};
pub use preprocess::{augment, preprocess_fix_length, select_leads, AugmentConfig};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const N_CLASSES: usize = 9;

/// Diagnostic classes, in the fixed order used by every label vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DiagnosticClass {
    Snr,
    Af,
    Iavb,
    Lbbb,
    Rbbb,
    Pac,
    Pvc,
    Std,
    Ste,
}

impl DiagnosticClass {
    pub const ALL: [DiagnosticClass; N_CLASSES] = [
        Self::Snr,
        Self::Af,
        Self::Iavb,
        Self::Lbbb,
        Self::Rbbb,
        Self::Pac,
        Self::Pvc,
        Self::Std,
        Self::Ste,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn code(self) -> &'static str {
        match self {
            Self::Snr => "SNR",
            Self::Af => "AF",
            Self::Iavb => "IAVB",
            Self::Lbbb => "LBBB",
            Self::Rbbb => "RBBB",
            Self::Pac => "PAC",
            Self::Pvc => "PVC",
            Self::Std => "STD",
            Self::Ste => "STE",
        }
    }
}

impl fmt::Display for DiagnosticClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for DiagnosticClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        // "IVAB" is a common misspelling of first-degree AV block in CPSC2018 tooling.
        if s.eq_ignore_ascii_case("IVAB") {
            return Ok(Self::Iavb);
        }
        Self::ALL
            .into_iter()
            .find(|c| c.code().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown label code `{s}`")))
    }
}

/// Standard ECG leads in canonical order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Lead {
    I,
    II,
    III,
    AVR,
    AVL,
    AVF,
    V1,
    V2,
    V3,
    V4,
    V5,
    V6,
}

impl Lead {
    pub const ALL: [Lead; 12] = [
        Self::I,
        Self::II,
        Self::III,
        Self::AVR,
        Self::AVL,
        Self::AVF,
        Self::V1,
        Self::V2,
        Self::V3,
        Self::V4,
        Self::V5,
        Self::V6,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::I => "I",
            Self::II => "II",
            Self::III => "III",
            Self::AVR => "aVR",
            Self::AVL => "aVL",
            Self::AVF => "aVF",
            Self::V1 => "V1",
            Self::V2 => "V2",
            Self::V3 => "V3",
            Self::V4 => "V4",
            Self::V5 => "V5",
            Self::V6 => "V6",
        }
    }

    /// Parses a comma-separated lead list such as `I,aVR,V5`.
    pub fn parse_list(s: &str) -> Result<Vec<Lead>> {
        s.split(',')
            .filter(|p| !p.trim().is_empty())
            .map(str::parse)
            .collect()
    }
}

impl fmt::Display for Lead {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Lead {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Self::ALL
            .into_iter()
            .find(|l| l.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownLead(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sex {
    M,
    F,
}

impl FromStr for Sex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "M" | "m" | "Male" | "male" => Ok(Sex::M),
            "F" | "f" | "Female" | "female" => Ok(Sex::F),
            other => Err(Error::InvalidArgument(format!("unknown sex `{other}`"))),
        }
    }
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sex::M => "M",
            Sex::F => "F",
        })
    }
}

/// Multi-hot label vector over the nine diagnostic classes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelSet([bool; N_CLASSES]);

impl LabelSet {
    pub fn from_classes(classes: impl IntoIterator<Item = DiagnosticClass>) -> Self {
        let mut set = Self::default();
        for c in classes {
            set.0[c.index()] = true;
        }
        set
    }

    pub fn contains(&self, c: DiagnosticClass) -> bool {
        self.0[c.index()]
    }

    pub fn is_empty(&self) -> bool {
        !self.0.iter().any(|&b| b)
    }

    pub fn classes(&self) -> impl Iterator<Item = DiagnosticClass> + '_ {
        DiagnosticClass::ALL
            .into_iter()
            .filter(|c| self.contains(*c))
    }

    pub fn as_slice(&self) -> &[bool; N_CLASSES] {
        &self.0
    }

    pub fn to_f64(self) -> [f64; N_CLASSES] {
        self.0.map(|b| if b { 1.0 } else { 0.0 })
    }

    /// Semicolon-separated codes, the manifest encoding.
    pub fn to_codes(&self) -> String {
        self.classes()
            .map(|c| c.code())
            .collect::<Vec<_>>()
            .join(";")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EcgRecord {
    pub record_id: String,
    /// One row per lead, millivolts.
    pub signal: Vec<Vec<f64>>,
    pub fs: f64,
    pub leads: Vec<Lead>,
    pub age: Option<f64>,
    pub sex: Option<Sex>,
    pub labels: LabelSet,
}

impl EcgRecord {
    pub fn n_leads(&self) -> usize {
        self.leads.len()
    }

    pub fn n_samples(&self) -> usize {
        self.signal.first().map_or(0, Vec::len)
    }

    pub fn lead(&self, lead: Lead) -> Option<&[f64]> {
        self.leads
            .iter()
            .position(|l| *l == lead)
            .map(|i| self.signal[i].as_slice())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |message: String| {
            Err(Error::InvalidRecord {
                record_id: self.record_id.clone(),
                message,
            })
        };
        if self.leads.is_empty() || self.leads.len() > 12 {
            return fail(format!("{} leads, expected 1..=12", self.leads.len()));
        }
        for (i, l) in self.leads.iter().enumerate() {
            if self.leads[..i].contains(l) {
                return fail(format!("duplicate lead {l}"));
            }
        }
        if self.signal.len() != self.leads.len() {
            return fail(format!(
                "{} signal rows for {} leads",
                self.signal.len(),
                self.leads.len()
            ));
        }
        if !(self.fs > 0.0 && self.fs.is_finite()) {
            return fail(format!("sampling rate {} must be positive", self.fs));
        }
        let n = self.n_samples();
        if n == 0 {
            return fail("no samples".into());
        }
        for (row, lead) in self.signal.iter().zip(&self.leads) {
            if row.len() != n {
                return fail(format!(
                    "lead {lead} has {} samples, expected {n}",
                    row.len()
                ));
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return fail(format!("non-finite value in lead {lead} at sample {j}"));
            }
        }
        Ok(())
    }
}

/// Stacks records into a `[batch, leads, samples]` tensor.
pub fn records_to_tensor(records: &[&EcgRecord]) -> Result<Tensor> {
    let first = records
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
    let (c, l) = (first.n_leads(), first.n_samples());
    let mut data = Vec::with_capacity(records.len() * c * l);
    for r in records {
        if r.n_leads() != c || r.n_samples() != l {
            return Err(Error::shape(
                "records_to_tensor",
                format!(
                    "record {} is {}x{}, batch expects {c}x{l}",
                    r.record_id,
                    r.n_leads(),
                    r.n_samples()
                ),
            ));
        }
        for row in &r.signal {
            data.extend_from_slice(row);
        }
    }
    Tensor::new(vec![records.len(), c, l], data)
}

/// `[batch, 9]` multi-hot targets.
pub fn labels_to_tensor(records: &[&EcgRecord]) -> Tensor {
    let data = records.iter().flat_map(|r| r.labels.to_f64()).collect();
    Tensor::new(vec![records.len(), N_CLASSES], data).expect("label shape")
}
