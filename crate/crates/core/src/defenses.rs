//! Attack-agnostic waveform defenses: amplitude quantization, median
//! smoothing and additive Gaussian noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::error::{Error, Result};

const INT_SCALE: f64 = 32768.0;

/// One of the three supported defenses with its parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Defense {
    /// Rounds int16-domain samples to the nearest multiple of `lambda_level`.
    Qt { lambda_level: u32 },
    /// Centered running median of odd width `kernel`.
    Ms { kernel: usize },
    /// Gaussian noise at `snr_db` against the input's power.
    An { snr_db: f64, seed: u64 },
}

impl Defense {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Defense::Qt { lambda_level } => {
                if lambda_level == 0 || !lambda_level.is_power_of_two() {
                    return Err(Error::Config(format!(
                        "quantization level must be a positive power of two, got {lambda_level}"
                    )));
                }
            }
            Defense::Ms { kernel } => {
                if kernel < 3 || kernel % 2 == 0 {
                    return Err(Error::Config(format!("median kernel must be odd and at least 3, got {kernel}")));
                }
            }
            Defense::An { snr_db, .. } => {
                if !snr_db.is_finite() {
                    return Err(Error::Config("noise SNR must be finite".into()));
                }
            }
        }
        Ok(())
    }

    pub fn apply(&self, w: &Waveform) -> Result<Waveform> {
        self.validate()?;
        match *self {
            Defense::Qt { lambda_level } => quantize_defense(w, lambda_level),
            Defense::Ms { kernel } => median_smooth(w, kernel),
            Defense::An { snr_db, seed } => add_noise_defense(w, snr_db, seed),
        }
    }

    /// Short method id used in reports.
    pub fn id(&self) -> &'static str {
        match self {
            Defense::Qt { .. } => "qt",
            Defense::Ms { .. } => "ms",
            Defense::An { .. } => "an",
        }
    }
}

fn round_half_away(v: f64) -> f64 {
    // f64::round already breaks ties away from zero.
    v.round()
}

/// Quantizes samples to multiples of `lambda_level` int16 codes.
pub fn quantize_defense(w: &Waveform, lambda_level: u32) -> Result<Waveform> {
    Defense::Qt { lambda_level }.validate()?;
    let step = lambda_level as f64;
    let out = w
        .samples()
        .iter()
        .map(|s| (round_half_away(s * INT_SCALE / step) * step / INT_SCALE).clamp(-1.0, 1.0))
        .collect();
    w.derive(out)
}

/// Running median with replicate padding at both edges.
pub fn median_smooth(w: &Waveform, kernel: usize) -> Result<Waveform> {
    Defense::Ms { kernel }.validate()?;
    let x = w.samples();
    if kernel > x.len() {
        return Err(Error::InvalidInput(format!(
            "median kernel {kernel} exceeds signal length {}",
            x.len()
        )));
    }
    let half = (kernel / 2) as isize;
    let last = x.len() as isize - 1;
    let mut window = vec![0.0; kernel];
    let out = (0..x.len() as isize)
        .map(|i| {
            for (j, slot) in window.iter_mut().enumerate() {
                let idx = (i + j as isize - half).clamp(0, last);
                *slot = x[idx as usize];
            }
            window.sort_by(f64::total_cmp);
            window[kernel / 2]
        })
        .collect();
    w.derive(out)
}

/// Adds seeded Gaussian noise scaled so the realized SNR equals `snr_db`
/// before clamping to `[-1, 1]`.
pub fn add_noise_defense(w: &Waveform, snr_db: f64, seed: u64) -> Result<Waveform> {
    Defense::An { snr_db, seed }.validate()?;
    let p_signal = w.power();
    if p_signal == 0.0 {
        return Err(Error::InvalidInput("cannot set an SNR against a silent input".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..w.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let p_noise = noise.iter().map(|v| v * v).sum::<f64>() / noise.len() as f64;
    let scale = (p_signal / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt();
    let out = w
        .samples()
        .iter()
        .zip(&noise)
        .map(|(s, n)| (s + scale * n).clamp(-1.0, 1.0))
        .collect();
    w.derive(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::SAMPLE_RATE;
    use rand::Rng;

    fn wave(s: Vec<f64>) -> Waveform {
        Waveform::new(s, SAMPLE_RATE).unwrap()
    }

    fn codes(w: &Waveform) -> Vec<f64> {
        w.samples().iter().map(|s| s * INT_SCALE).collect()
    }

    #[test]
    fn quantization_hand_cases() {
        let w = wave(vec![300.0 / INT_SCALE, 384.0 / INT_SCALE, 0.0, -384.0 / INT_SCALE, 1.0]);
        let q = quantize_defense(&w, 256).unwrap();
        assert_eq!(codes(&q), vec![256.0, 512.0, 0.0, -512.0, 32768.0]);
        assert!(quantize_defense(&w, 100).is_err());
    }

    #[test]
    fn quantization_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = wave((0..500).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let once = quantize_defense(&w, 256).unwrap();
        assert_eq!(quantize_defense(&once, 256).unwrap(), once);
    }

    #[test]
    fn median_hand_cases() {
        let m = median_smooth(&wave(vec![0.1, 0.5, 0.1, 0.5, 0.1]), 3).unwrap();
        assert_eq!(m.samples(), &[0.1, 0.1, 0.5, 0.1, 0.1]);
        let c = wave(vec![0.3; 9]);
        assert_eq!(median_smooth(&c, 5).unwrap(), c);
        let mut imp = vec![0.0; 9];
        imp[4] = 0.9;
        assert!(median_smooth(&wave(imp), 3).unwrap().samples().iter().all(|v| *v == 0.0));
        assert!(median_smooth(&c, 4).is_err());
        assert!(median_smooth(&c, 11).is_err());
    }

    #[test]
    fn median_is_not_idempotent_in_general() {
        // A short square pattern survives one pass but keeps changing.
        let w = wave(vec![0.0, 0.5, 0.5, 0.0, 0.5, 0.0, 0.0, 0.5, 0.5, 0.5, 0.0]);
        let once = median_smooth(&w, 5).unwrap();
        let twice = median_smooth(&once, 5).unwrap();
        assert_ne!(once, twice);
    }

    #[test]
    fn noise_hits_requested_snr() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = wave((0..16000).map(|_| rng.gen_range(-0.5..0.5)).collect());
        let out = add_noise_defense(&w, 25.0, 9).unwrap();
        let noise: Vec<f64> = out.samples().iter().zip(w.samples()).map(|(a, b)| a - b).collect();
        let pn = noise.iter().map(|v| v * v).sum::<f64>() / noise.len() as f64;
        let snr = 10.0 * (w.power() / pn).log10();
        assert!((snr - 25.0).abs() < 0.1, "{snr}");
        assert_eq!(out, add_noise_defense(&w, 25.0, 9).unwrap());
        let quiet = add_noise_defense(&w, 120.0, 9).unwrap();
        assert!(quiet.max_abs_diff(&w).unwrap() < 1e-5);
        assert!(add_noise_defense(&wave(vec![0.0; 10]), 25.0, 1).is_err());
    }

    #[test]
    fn config_parses_from_json() {
        let d: Defense = serde_json::from_str(r#"{"kind":"qt","lambda_level":256}"#).unwrap();
        assert_eq!(d, Defense::Qt { lambda_level: 256 });
        assert!(serde_json::from_str::<Defense>(r#"{"kind":"ms","kernel":3,"x":1}"#).is_err());
    }
}
