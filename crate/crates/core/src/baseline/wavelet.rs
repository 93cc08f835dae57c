use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};

/// An orthogonal wavelet family, given by its decomposition low-pass filter.
pub trait Wavelet: Send + Sync {
    fn name(&self) -> &'static str;
    fn lowpass(&self) -> &[f64];
}

pub struct Haar;

/// Daubechies wavelet with four vanishing moments (8 taps).
pub struct Db4;

const HAAR: [f64; 2] = [FRAC_1_SQRT_2, FRAC_1_SQRT_2];

const DB4: [f64; 8] = [
    0.230_377_813_308_896_5,
    0.714_846_570_552_915_7,
    0.630_880_767_929_858_9,
    -0.027_983_769_416_859_85,
    -0.187_034_811_719_093_1,
    0.030_841_381_835_560_76,
    0.032_883_011_666_885_19,
    -0.010_597_401_785_069_03,
];

impl Wavelet for Haar {
    fn name(&self) -> &'static str {
        "haar"
    }

    fn lowpass(&self) -> &[f64] {
        &HAAR
    }
}

impl Wavelet for Db4 {
    fn name(&self) -> &'static str {
        "db4"
    }

    fn lowpass(&self) -> &[f64] {
        &DB4
    }
}

pub struct WaveletRegistry {
    items: BTreeMap<String, Box<dyn Wavelet>>,
}

impl WaveletRegistry {
    pub fn with_builtins() -> Self {
        let mut r = Self {
            items: BTreeMap::new(),
        };
        r.register(Box::new(Haar));
        r.register(Box::new(Db4));
        r
    }

    pub fn register(&mut self, w: Box<dyn Wavelet>) {
        self.items.insert(w.name().to_string(), w);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Wavelet> {
        self.items
            .get(&name.to_ascii_lowercase())
            .map(|w| w.as_ref())
            .ok_or_else(|| Error::UnknownStrategy {
                kind: "wavelet",
                name: name.into(),
                available: self.names().join(", "),
            })
    }

    pub fn names(&self) -> Vec<&str> {
        self.items.keys().map(String::as_str).collect()
    }
}

/// One analysis step with periodic boundaries: `(approx, detail)`, each half as long.
/// Odd-length input is first extended by one sample (its periodic continuation).
fn analysis_step(x: &[f64], h: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut ext = x.to_vec();
    if ext.len() % 2 == 1 {
        ext.push(x[0]);
    }
    let n = ext.len();
    let taps = h.len();
    // Quadrature mirror: g[k] = (-1)^k h[taps-1-k].
    let g: Vec<f64> = (0..taps)
        .map(|k| {
            if k % 2 == 0 {
                h[taps - 1 - k]
            } else {
                -h[taps - 1 - k]
            }
        })
        .collect();
    let mut approx = vec![0.0; n / 2];
    let mut detail = vec![0.0; n / 2];
    for i in 0..n / 2 {
        for k in 0..taps {
            let v = ext[(2 * i + k) % n];
            approx[i] += h[k] * v;
            detail[i] += g[k] * v;
        }
    }
    (approx, detail)
}

/// Multi-level DWT. Returns `[approx_L, detail_L, …, detail_1]`.
pub fn dwt(signal: &[f64], wavelet: &dyn Wavelet, levels: usize) -> Result<Vec<Vec<f64>>> {
    if levels == 0 {
        return Err(Error::InvalidArgument("wavelet depth must be >= 1".into()));
    }
    if levels >= usize::BITS as usize || signal.len() < (1usize << levels) {
        return Err(Error::InvalidArgument(format!(
            "{} samples are too few for a {levels}-level decomposition",
            signal.len()
        )));
    }
    let mut details = Vec::with_capacity(levels);
    let mut approx = signal.to_vec();
    for _ in 0..levels {
        let (a, d) = analysis_step(&approx, wavelet.lowpass());
        details.push(d);
        approx = a;
    }
    let mut bands = vec![approx];
    bands.extend(details.into_iter().rev());
    Ok(bands)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    const S2: f64 = std::f64::consts::SQRT_2;

    #[test]
    fn haar_hand_fixtures() {
        let b = dwt(&[1.0, 1.0, 1.0, 1.0], &Haar, 1).unwrap();
        assert_eq!(b.len(), 2);
        for (got, want) in b[0].iter().zip([S2, S2]) {
            assert!((got - want).abs() < 1e-15);
        }
        assert_eq!(b[1], vec![0.0, 0.0]);
        let b = dwt(&[1.0, -1.0, 1.0, -1.0], &Haar, 1).unwrap();
        assert_eq!(b[0], vec![0.0, 0.0]);
        for (got, want) in b[1].iter().zip([S2, S2]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn filters_are_orthonormal() {
        for w in [&Haar as &dyn Wavelet, &Db4] {
            let h = w.lowpass();
            assert!((h.iter().sum::<f64>() - S2).abs() < 1e-12, "{}", w.name());
            for shift in (0..h.len()).step_by(2) {
                let dot: f64 = (0..h.len() - shift).map(|k| h[k] * h[k + shift]).sum();
                let want = if shift == 0 { 1.0 } else { 0.0 };
                assert!(
                    (dot - want).abs() < 1e-12,
                    "{} shift {shift}: {dot}",
                    w.name()
                );
            }
        }
    }

    #[test]
    fn energy_is_conserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for w in [&Haar as &dyn Wavelet, &Db4] {
            for levels in 1..=4 {
                let x: Vec<f64> = (0..1024).map(|_| rng.random_range(-1.0..1.0)).collect();
                let e: f64 = x.iter().map(|v| v * v).sum();
                let bands = dwt(&x, w, levels).unwrap();
                let eb: f64 = bands.iter().flatten().map(|v| v * v).sum();
                assert!(
                    (e - eb).abs() < 1e-8,
                    "{} L={levels}: {e} vs {eb}",
                    w.name()
                );
                assert_eq!(bands.len(), levels + 1);
                assert_eq!(bands[0].len(), 1024 >> levels);
                assert_eq!(bands[levels].len(), 512);
            }
        }
    }

    #[test]
    fn depth_limits_and_registry() {
        assert!(dwt(&[1.0; 7], &Haar, 3).is_err());
        assert!(dwt(&[1.0; 8], &Haar, 3).is_ok());
        assert!(dwt(&[1.0; 8], &Haar, 0).is_err());
        let reg = WaveletRegistry::with_builtins();
        assert_eq!(reg.names(), vec!["db4", "haar"]);
        assert_eq!(reg.get("DB4").unwrap().name(), "db4");
        assert!(matches!(
            reg.get("sym5"),
            Err(Error::UnknownStrategy { .. })
        ));
    }
}
