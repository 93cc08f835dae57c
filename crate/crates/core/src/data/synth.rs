//! Synthetic quasi-periodic ECG generator, a desk-scale stand-in for real
//! recordings. Each rhythm is a [`RhythmGenerator`] registered by name; the
//! shared renderer turns a beat schedule into Gaussian P/QRS/T bumps on a
//! wandering baseline.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::manifest::{DatasetManifest, ManifestEntry};
use super::{write_record, DiagnosticClass, EcgRecord, LabelSet, Lead, Sex};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BeatKind {
    Sinus,
    /// Ventricular beat conducted without a preceding P wave.
    NoP,
    /// Premature ventricular beat: wide, tall QRS with discordant T.
    Ectopic,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Beat {
    /// R-peak time in seconds.
    pub time: f64,
    pub kind: BeatKind,
}

pub trait RhythmGenerator: Send + Sync {
    fn name(&self) -> &'static str;

    fn label(&self) -> DiagnosticClass;

    /// Beat schedule covering `[0, duration)` for a mean RR interval.
    fn beats(&self, rr: f64, duration: f64, rng: &mut dyn RngCore) -> Vec<Beat>;

    /// Amplitude (mV) of fibrillatory baseline activity.
    fn atrial_activity(&self) -> f64 {
        0.0
    }
}

pub struct NormalRhythm;
pub struct AtrialFibrillation;
pub struct PrematureVentricular;

impl RhythmGenerator for NormalRhythm {
    fn name(&self) -> &'static str {
        "normal"
    }

    fn label(&self) -> DiagnosticClass {
        DiagnosticClass::Snr
    }

    fn beats(&self, rr: f64, duration: f64, rng: &mut dyn RngCore) -> Vec<Beat> {
        let mut t = rng.random_range(0.0..rr);
        let mut out = Vec::new();
        while t < duration {
            out.push(Beat {
                time: t,
                kind: BeatKind::Sinus,
            });
            t += rr * (1.0 + rng.random_range(-0.01..0.01));
        }
        out
    }
}

impl RhythmGenerator for AtrialFibrillation {
    fn name(&self) -> &'static str {
        "af"
    }

    fn label(&self) -> DiagnosticClass {
        DiagnosticClass::Af
    }

    fn beats(&self, rr: f64, duration: f64, rng: &mut dyn RngCore) -> Vec<Beat> {
        let mut t = rng.random_range(0.0..rr);
        let mut out = Vec::new();
        while t < duration {
            out.push(Beat {
                time: t,
                kind: BeatKind::NoP,
            });
            t += rr * rng.random_range(0.55..1.45);
        }
        out
    }

    fn atrial_activity(&self) -> f64 {
        0.05
    }
}

impl RhythmGenerator for PrematureVentricular {
    fn name(&self) -> &'static str {
        "pvc"
    }

    fn label(&self) -> DiagnosticClass {
        DiagnosticClass::Pvc
    }

    fn beats(&self, rr: f64, duration: f64, rng: &mut dyn RngCore) -> Vec<Beat> {
        let mut sinus = NormalRhythm.beats(rr, duration, rng);
        if sinus.len() < 2 {
            return sinus;
        }
        // Replace 1..=3 sinus beats (never the first) with early ectopics; the
        // following sinus beat keeps its slot, giving a compensatory pause.
        let n_ectopic = rng.random_range(1..=3usize).min(sinus.len() - 1);
        for _ in 0..n_ectopic {
            let i = rng.random_range(1..sinus.len());
            let prev = sinus[i - 1].time;
            sinus[i] = Beat {
                time: prev + 0.6 * (sinus[i].time - prev),
                kind: BeatKind::Ectopic,
            };
        }
        sinus
    }
}

/// Name-keyed set of rhythm generators.
pub struct RhythmRegistry {
    generators: BTreeMap<String, Box<dyn RhythmGenerator>>,
}

impl RhythmRegistry {
    pub fn empty() -> Self {
        Self {
            generators: BTreeMap::new(),
        }
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(NormalRhythm));
        r.register(Box::new(AtrialFibrillation));
        r.register(Box::new(PrematureVentricular));
        r
    }

    pub fn register(&mut self, generator: Box<dyn RhythmGenerator>) {
        self.generators
            .insert(generator.name().to_string(), generator);
    }

    /// Looks up by name, case-insensitively; a trailing `-like` is ignored.
    pub fn get(&self, name: &str) -> Result<&dyn RhythmGenerator> {
        let key = name.trim().to_ascii_lowercase();
        let key = key.strip_suffix("-like").unwrap_or(&key);
        self.generators
            .get(key)
            .map(|b| b.as_ref())
            .ok_or_else(|| Error::UnknownStrategy {
                kind: "rhythm",
                name: name.to_string(),
                available: self.names().join(", "),
            })
    }

    pub fn names(&self) -> Vec<&str> {
        self.generators.keys().map(String::as_str).collect()
    }
}

impl Default for RhythmRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

/// Gaussian bump: amplitude (mV), centre offset from the R peak (s), width σ (s).
type Wave = (f64, f64, f64);

fn waves(kind: BeatKind) -> &'static [Wave] {
    const SINUS: [Wave; 5] = [
        (0.15, -0.16, 0.02),
        (-0.12, -0.025, 0.008),
        (1.1, 0.0, 0.01),
        (-0.3, 0.025, 0.009),
        (0.3, 0.28, 0.045),
    ];
    match kind {
        BeatKind::Sinus => &SINUS,
        BeatKind::NoP => &SINUS[1..],
        BeatKind::Ectopic => &[(2.8, 0.0, 0.03), (-0.6, 0.07, 0.025), (-0.45, 0.32, 0.06)],
    }
}

/// Per-lead projection of the cardiac vector (aVR is inverted).
const LEAD_GAIN: [f64; 12] = [1.0, 1.3, 0.5, -0.9, 0.4, 0.9, -0.6, 0.8, 1.2, 1.4, 1.2, 1.0];

/// Renders one record's leads for a mean RR interval.
pub fn render_rhythm(
    generator: &dyn RhythmGenerator,
    n_leads: usize,
    n_samples: usize,
    fs: f64,
    rr: f64,
    rng: &mut dyn RngCore,
) -> Vec<Vec<f64>> {
    let duration = n_samples as f64 / fs;
    let beats = generator.beats(rr, duration, rng);
    let mut clean = vec![0.0; n_samples];
    for beat in &beats {
        for &(amp, offset, width) in waves(beat.kind) {
            let centre = beat.time + offset;
            let lo = ((centre - 5.0 * width) * fs).floor().max(0.0) as usize;
            let hi = (((centre + 5.0 * width) * fs).ceil().max(0.0) as usize).min(n_samples);
            for (j, v) in clean.iter_mut().enumerate().take(hi).skip(lo) {
                let t = j as f64 / fs;
                *v += amp * (-0.5 * ((t - centre) / width).powi(2)).exp();
            }
        }
    }

    let noise = Normal::new(0.0, 0.01).expect("valid sigma");
    let fib = generator.atrial_activity();
    let (f1, f2) = (rng.random_range(5.0..7.0), rng.random_range(7.0..9.0));
    (0..n_leads)
        .map(|k| {
            let gain = LEAD_GAIN[k % 12] * rng.random_range(0.9..1.1);
            let wander_phase = rng.random_range(0.0..2.0 * PI);
            let fib_phase = rng.random_range(0.0..2.0 * PI);
            clean
                .iter()
                .enumerate()
                .map(|(j, c)| {
                    let t = j as f64 / fs;
                    let mut v = gain * c + 0.05 * (2.0 * PI * 0.25 * t + wander_phase).sin();
                    if fib > 0.0 {
                        v += fib
                            * ((2.0 * PI * f1 * t + fib_phase).sin()
                                + 0.5 * (2.0 * PI * f2 * t + 2.0 * fib_phase).sin());
                    }
                    v + noise.sample(rng)
                })
                .collect()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_records: usize,
    pub classes: Vec<String>,
    pub n_leads: usize,
    pub n_samples: usize,
    pub fs: f64,
    pub seed: u64,
}

impl SynthConfig {
    fn validate<'r>(&self, registry: &'r RhythmRegistry) -> Result<Vec<&'r dyn RhythmGenerator>> {
        if self.classes.is_empty() {
            return Err(Error::Config(
                "at least one synthetic class is required".into(),
            ));
        }
        if self.n_records < self.classes.len() {
            return Err(Error::Config(format!(
                "{} records cannot cover {} classes",
                self.n_records,
                self.classes.len()
            )));
        }
        if !(1..=12).contains(&self.n_leads) || self.n_samples == 0 || !(self.fs > 0.0) {
            return Err(Error::Config(
                "synthetic records need 1..=12 leads, >= 1 sample and fs > 0".into(),
            ));
        }
        self.classes.iter().map(|c| registry.get(c)).collect()
    }
}

/// Builds the records in memory. Record `i` uses class `i mod n_classes` and
/// an RNG stream derived from `(seed, i)`, so records are independent of
/// each other and of `n_records`.
pub fn synthesize_records(cfg: &SynthConfig, registry: &RhythmRegistry) -> Result<Vec<EcgRecord>> {
    let generators = cfg.validate(registry)?;
    Ok((0..cfg.n_records)
        .map(|i| {
            let generator = generators[i % generators.len()];
            let mut rng = seed::rng(cfg.seed, &format!("synth/{i}"));
            let rr = rng.random_range(0.65..1.0);
            let signal = render_rhythm(generator, cfg.n_leads, cfg.n_samples, cfg.fs, rr, &mut rng);
            let age = f64::from(rng.random_range(20..86u32));
            let sex = if rng.random::<bool>() { Sex::M } else { Sex::F };
            EcgRecord {
                record_id: format!("S{i:05}"),
                signal,
                fs: cfg.fs,
                leads: Lead::ALL[..cfg.n_leads].to_vec(),
                age: Some(age),
                sex: Some(sex),
                labels: LabelSet::from_classes([generator.label()]),
            }
        })
        .collect())
}

/// Writes `manifest.csv` and `records/<id>.csv` under `out_dir`.
pub fn generate_synthetic_dataset(
    cfg: &SynthConfig,
    registry: &RhythmRegistry,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    let records = synthesize_records(cfg, registry)?;
    let rec_dir = out_dir.join("records");
    fs::create_dir_all(&rec_dir).map_err(|e| Error::io(&rec_dir, e))?;
    let mut entries = Vec::with_capacity(records.len());
    for r in &records {
        let rel = Path::new("records").join(format!("{}.csv", r.record_id));
        write_record(&out_dir.join(&rel), r)?;
        entries.push(ManifestEntry {
            record_id: r.record_id.clone(),
            path: rel,
            age: r.age,
            sex: r.sex,
            labels: r.labels,
            fs: Some(r.fs),
        });
    }
    let manifest = DatasetManifest {
        root: out_dir.to_path_buf(),
        entries,
        default_fs: cfg.fs,
    };
    manifest.write(&out_dir.join("manifest.csv"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::load_manifest;

    fn cfg(n: usize) -> SynthConfig {
        SynthConfig {
            n_records: n,
            classes: vec!["NORMAL".into(), "AF-like".into(), "PVC-like".into()],
            n_leads: 2,
            n_samples: 2000,
            fs: 250.0,
            seed: 7,
        }
    }

    fn autocorrelation(x: &[f64], lag: usize) -> f64 {
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        x.iter()
            .zip(&x[lag..])
            .map(|(a, b)| (a - mean) * (b - mean))
            .sum::<f64>()
            / (x.len() - lag) as f64
    }

    #[test]
    fn registry_lookup() {
        let r = RhythmRegistry::with_builtins();
        assert_eq!(r.get("AF-like").unwrap().label(), DiagnosticClass::Af);
        assert_eq!(r.get("Normal").unwrap().name(), "normal");
        let err = r.get("vt").err().unwrap().to_string();
        assert!(err.contains("af, normal, pvc"), "{err}");
    }

    #[test]
    fn normal_autocorrelation_peaks_at_rr() {
        let fs = 250.0;
        let rr = 0.8;
        let mut rng = seed::rng(1, "test");
        let sig = render_rhythm(&NormalRhythm, 1, 5000, fs, rr, &mut rng);
        let expected = (rr * fs) as usize;
        let best = (expected / 2..expected * 3 / 2)
            .max_by(|a, b| autocorrelation(&sig[0], *a).total_cmp(&autocorrelation(&sig[0], *b)))
            .unwrap();
        assert!(
            best.abs_diff(expected) <= 3,
            "peak at {best}, expected {expected}"
        );
    }

    /// Beat amplitude: max |x| in a ±0.15 s window around each R-peak candidate.
    fn beat_amplitudes(x: &[f64], fs: f64) -> Vec<f64> {
        let win = (0.15 * fs) as usize;
        let thresh = 0.5 * x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut amps = Vec::new();
        let mut j = 0;
        while j < x.len() {
            if x[j].abs() >= thresh * 0.3 {
                let end = (j + 2 * win).min(x.len());
                amps.push(x[j..end].iter().fold(0.0f64, |m, v| m.max(v.abs())));
                j = end;
            } else {
                j += 1;
            }
        }
        amps
    }

    #[test]
    fn pvc_has_a_tall_beat() {
        let registry = RhythmRegistry::with_builtins();
        let records = synthesize_records(&cfg(9), &registry).unwrap();
        for r in records
            .iter()
            .filter(|r| r.labels.contains(DiagnosticClass::Pvc))
        {
            let amps = beat_amplitudes(&r.signal[0], r.fs);
            let mut sorted = amps.clone();
            sorted.sort_by(f64::total_cmp);
            let median = sorted[sorted.len() / 2];
            assert!(amps.iter().any(|a| *a > 2.0 * median), "{amps:?}");
        }
    }

    #[test]
    fn labels_follow_class_rotation() {
        let registry = RhythmRegistry::with_builtins();
        let records = synthesize_records(&cfg(6), &registry).unwrap();
        let codes: Vec<String> = records.iter().map(|r| r.labels.to_codes()).collect();
        assert_eq!(codes, ["SNR", "AF", "PVC", "SNR", "AF", "PVC"]);
        assert!(records.iter().all(|r| r.validate().is_ok()));
    }

    #[test]
    fn too_few_records_rejected() {
        let registry = RhythmRegistry::with_builtins();
        assert!(synthesize_records(&cfg(2), &registry).is_err());
    }

    #[test]
    fn dataset_files_are_reproducible() {
        let registry = RhythmRegistry::with_builtins();
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let small = SynthConfig {
            n_samples: 300,
            ..cfg(6)
        };
        generate_synthetic_dataset(&small, &registry, a.path()).unwrap();
        generate_synthetic_dataset(&small, &registry, b.path()).unwrap();
        for rel in ["manifest.csv", "records/S00000.csv", "records/S00005.csv"] {
            assert_eq!(
                fs::read(a.path().join(rel)).unwrap(),
                fs::read(b.path().join(rel)).unwrap()
            );
        }
        let m = load_manifest(a.path().join("manifest.csv")).unwrap();
        assert_eq!(m.len(), 6);
        let all = m.load_all().unwrap();
        assert_eq!(all[0].fs, 250.0);
        assert_eq!(all[0].n_samples(), 300);
    }
}
