use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{EcgRecord, Lead};
use crate::error::{Error, Result};

/// Crops to the last `nsteps` samples, or left-pads with zeros so the
/// original signal ends the window.
pub fn preprocess_fix_length(rec: &EcgRecord, nsteps: usize) -> Result<EcgRecord> {
    if nsteps == 0 {
        return Err(Error::InvalidArgument("nsteps must be >= 1".into()));
    }
    let signal = rec
        .signal
        .iter()
        .map(|row| {
            if row.len() >= nsteps {
                row[row.len() - nsteps..].to_vec()
            } else {
                let mut out = vec![0.0; nsteps - row.len()];
                out.extend_from_slice(row);
                out
            }
        })
        .collect();
    Ok(EcgRecord {
        signal,
        ..rec.clone()
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub scale_min: f64,
    pub scale_max: f64,
    /// Maximum shift as a fraction of the window length.
    pub max_shift_frac: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            scale_min: 0.8,
            scale_max: 1.2,
            max_shift_frac: 0.1,
        }
    }
}

impl AugmentConfig {
    pub fn identity() -> Self {
        Self {
            scale_min: 1.0,
            scale_max: 1.0,
            max_shift_frac: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale_min > 0.0 && self.scale_min <= self.scale_max && self.scale_max.is_finite())
        {
            return Err(Error::Config(format!(
                "augmentation needs 0 < scale_min <= scale_max, got [{}, {}]",
                self.scale_min, self.scale_max
            )));
        }
        if !(0.0..1.0).contains(&self.max_shift_frac) {
            return Err(Error::Config(format!(
                "max_shift_frac must be in [0, 1), got {}",
                self.max_shift_frac
            )));
        }
        Ok(())
    }

    fn max_shift(&self, n: usize) -> i64 {
        (self.max_shift_frac * n as f64).floor() as i64
    }
}

/// Draws one amplitude factor and one integer delay; applies both to every lead.
pub fn augment<R: Rng + ?Sized>(rec: &EcgRecord, cfg: &AugmentConfig, rng: &mut R) -> EcgRecord {
    let scale = if cfg.scale_max > cfg.scale_min {
        rng.random_range(cfg.scale_min..=cfg.scale_max)
    } else {
        cfg.scale_min
    };
    let max_shift = cfg.max_shift(rec.n_samples());
    let offset = if max_shift > 0 {
        rng.random_range(-max_shift..=max_shift)
    } else {
        0
    };
    EcgRecord {
        signal: rec
            .signal
            .iter()
            .map(|row| shift_scaled(row, offset, scale))
            .collect(),
        ..rec.clone()
    }
}

/// Positive offsets delay the signal; vacated samples are zero.
pub(crate) fn shift_scaled(row: &[f64], offset: i64, scale: f64) -> Vec<f64> {
    let n = row.len() as i64;
    (0..n)
        .map(|i| {
            let src = i - offset;
            if (0..n).contains(&src) {
                row[src as usize] * scale
            } else {
                0.0
            }
        })
        .collect()
}

/// Restricts a record to `leads`, in the requested order.
pub fn select_leads(rec: &EcgRecord, leads: &[Lead]) -> Result<EcgRecord> {
    if leads.is_empty() {
        return Err(Error::InvalidArgument("no leads selected".into()));
    }
    let signal = leads
        .iter()
        .map(|l| {
            rec.lead(*l).map(<[f64]>::to_vec).ok_or_else(|| {
                Error::UnknownLead(format!("{l} (absent from record {})", rec.record_id))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EcgRecord {
        signal,
        leads: leads.to_vec(),
        ..rec.clone()
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::data::{DiagnosticClass, LabelSet};

    fn rec(n_leads: usize, n: usize) -> EcgRecord {
        EcgRecord {
            record_id: "r".into(),
            signal: (0..n_leads)
                .map(|k| (0..n).map(|j| (j as f64) + 0.5 * k as f64).collect())
                .collect(),
            fs: 500.0,
            leads: Lead::ALL[..n_leads].to_vec(),
            age: Some(60.0),
            sex: None,
            labels: LabelSet::from_classes([DiagnosticClass::Af]),
        }
    }

    #[test]
    fn fix_length_crops_keeping_the_end() {
        let r = rec(2, 20_000);
        let out = preprocess_fix_length(&r, 15_000).unwrap();
        assert_eq!(out.n_samples(), 15_000);
        assert_eq!(out.signal[0][0], 5000.0);
        assert_eq!(out.signal[0][14_999], 19_999.0);
        assert_eq!(out.labels, r.labels);
    }

    #[test]
    fn fix_length_identity_and_padding() {
        let r = rec(1, 15_000);
        assert_eq!(preprocess_fix_length(&r, 15_000).unwrap(), r);
        let short = rec(1, 3000);
        let out = preprocess_fix_length(&short, 15_000).unwrap();
        assert!(out.signal[0][..12_000].iter().all(|v| *v == 0.0));
        assert_eq!(&out.signal[0][12_000..], short.signal[0].as_slice());
        assert!(preprocess_fix_length(&short, 0).is_err());
    }

    #[test]
    fn augment_identity_and_scaling() {
        let r = rec(3, 100);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(augment(&r, &AugmentConfig::identity(), &mut rng), r);
        let double = AugmentConfig {
            scale_min: 2.0,
            scale_max: 2.0,
            ..AugmentConfig::identity()
        };
        let out = augment(&r, &double, &mut rng);
        for (a, b) in out.signal.iter().flatten().zip(r.signal.iter().flatten()) {
            assert_eq!(*a, 2.0 * b);
        }
    }

    #[test]
    fn shift_delays_and_zero_fills() {
        let row: Vec<f64> = (1..=1000).map(f64::from).collect();
        let out = shift_scaled(&row, 37, 1.0);
        assert!(out[..37].iter().all(|v| *v == 0.0));
        assert_eq!(out[37], 1.0);
        assert_eq!(out[999], row[999 - 37]);
        let out = shift_scaled(&row, -5, 1.0);
        assert_eq!(out[0], 6.0);
        assert!(out[995..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn augment_shift_stays_within_bound() {
        let cfg = AugmentConfig {
            scale_min: 1.0,
            scale_max: 1.0,
            max_shift_frac: 0.1,
        };
        let r = EcgRecord {
            signal: vec![(1..=1000).map(f64::from).collect()],
            ..rec(1, 1000)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let out = augment(&r, &cfg, &mut rng);
            let first = out.signal[0].iter().position(|v| *v != 0.0).unwrap() as i64;
            let offset = if first > 0 {
                first
            } else {
                1 - out.signal[0][0] as i64
            };
            assert!(offset.abs() <= 100);
            assert_eq!(out.n_samples(), 1000);
        }
    }

    #[test]
    fn augment_config_validation() {
        assert!(AugmentConfig::default().validate().is_ok());
        let bad = AugmentConfig {
            scale_min: 0.0,
            ..AugmentConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = AugmentConfig {
            max_shift_frac: 1.0,
            ..AugmentConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn select_leads_examples() {
        let r = rec(12, 10);
        let one = select_leads(&r, &[Lead::I]).unwrap();
        assert_eq!(one.signal, vec![r.signal[0].clone()]);
        let two = select_leads(&r, &[Lead::V1, Lead::II]).unwrap();
        assert_eq!(two.signal, vec![r.signal[6].clone(), r.signal[1].clone()]);
        assert_eq!(two.leads, vec![Lead::V1, Lead::II]);
        let narrow = select_leads(&r, &[Lead::I]).unwrap();
        assert!(select_leads(&narrow, &[Lead::V2]).is_err());
    }

    proptest! {
        #[test]
        fn fix_length_idempotent_and_keeps_tail(n in 1usize..400, nsteps in 1usize..400) {
            let r = rec(2, n);
            let once = preprocess_fix_length(&r, nsteps).unwrap();
            let twice = preprocess_fix_length(&once, nsteps).unwrap();
            prop_assert_eq!(&once, &twice);
            let keep = n.min(nsteps);
            for k in 0..2 {
                prop_assert_eq!(&once.signal[k][nsteps - keep..], &r.signal[k][n - keep..]);
            }
        }

        #[test]
        fn select_leads_composes(a in proptest::sample::subsequence(Lead::ALL.to_vec(), 1..12), pick in any::<prop::sample::Index>()) {
            let r = rec(12, 5);
            let b = vec![a[pick.index(a.len())]];
            let direct = select_leads(&r, &b).unwrap();
            let nested = select_leads(&select_leads(&r, &a).unwrap(), &b).unwrap();
            prop_assert_eq!(direct, nested);
        }
    }
}
