//! Restoration and utility metrics: SI-SNR, scaled MSE, EER and pitch
//! correlation.

use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::error::{Error, Result};

/// Bound applied to SI-SNR so identical signals give a finite value.
pub const SI_SNR_CAP_DB: f64 = 100.0;

/// Factor applied to the mean squared error of normalized amplitudes.
pub const MSE_SCALE: f64 = 1e6;

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

/// Scale-invariant SNR of `estimate` against `reference` in dB, clamped to
/// `±SI_SNR_CAP_DB`.
pub fn si_snr(estimate: &Waveform, reference: &Waveform) -> Result<f64> {
    si_snr_samples(estimate.samples(), reference.samples())
}

pub fn si_snr_samples(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    check_lengths(estimate, reference)?;
    let n = estimate.len() as f64;
    let me = estimate.iter().sum::<f64>() / n;
    let mr = reference.iter().sum::<f64>() / n;
    let e: Vec<f64> = estimate.iter().map(|v| v - me).collect();
    let r: Vec<f64> = reference.iter().map(|v| v - mr).collect();
    let rr: f64 = r.iter().map(|v| v * v).sum();
    if rr == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let scale = e.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / rr;
    let mut target = 0.0;
    let mut noise = 0.0;
    for (a, b) in e.iter().zip(&r) {
        let s = scale * b;
        target += s * s;
        noise += (a - s) * (a - s);
    }
    let db = if noise == 0.0 {
        SI_SNR_CAP_DB
    } else if target == 0.0 {
        -SI_SNR_CAP_DB
    } else {
        10.0 * (target / noise).log10()
    };
    Ok(db.clamp(-SI_SNR_CAP_DB, SI_SNR_CAP_DB))
}

/// Mean squared sample difference times [`MSE_SCALE`].
pub fn mse(estimate: &Waveform, reference: &Waveform) -> Result<f64> {
    mse_samples(estimate.samples(), reference.samples())
}

pub fn mse_samples(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    check_lengths(estimate, reference)?;
    let sum: f64 = estimate.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / estimate.len() as f64 * MSE_SCALE)
}

/// Equal error rate as a fraction.
///
/// Thresholds sweep the distinct pooled scores in increasing order followed
/// by `+∞`. At threshold `t`, FAR is the share of nontarget scores `≥ t` and
/// FRR the share of target scores `< t`. The result is read off where
/// `FAR - FRR` first reaches zero, interpolating linearly between the two
/// neighbouring thresholds when it jumps across.
pub fn compute_eer(target: &[f64], nontarget: &[f64]) -> Result<f64> {
    if target.is_empty() || nontarget.is_empty() {
        return Err(Error::InvalidInput("EER needs target and nontarget scores".into()));
    }
    if target.iter().chain(nontarget).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("verification score".into()));
    }
    let mut pooled: Vec<(f64, bool)> = target
        .iter()
        .map(|&s| (s, true))
        .chain(nontarget.iter().map(|&s| (s, false)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (nt, nn) = (target.len() as f64, nontarget.len() as f64);
    let mut below_t = 0usize;
    let mut below_n = 0usize;
    let mut prev = (1.0, 0.0); // (FAR, FRR) at the lowest threshold
    let mut i = 0;
    loop {
        // Threshold at pooled[i].0, or +∞ once every score lies below it.
        let (far, frr) = (1.0 - below_n as f64 / nn, below_t as f64 / nt);
        let d = far - frr;
        if d <= 0.0 {
            let dp = prev.0 - prev.1;
            if dp <= 0.0 || d == 0.0 {
                return Ok(far);
            }
            let lambda = dp / (dp - d);
            return Ok(prev.0 + lambda * (far - prev.0));
        }
        prev = (far, frr);
        if i == pooled.len() {
            unreachable!("FAR - FRR is -1 at +inf");
        }
        let s = pooled[i].0;
        while i < pooled.len() && pooled[i].0 == s {
            if pooled[i].1 {
                below_t += 1;
            } else {
                below_n += 1;
            }
            i += 1;
        }
    }
}

/// Frame-level pitch estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitchFrame {
    pub f0_hz: f64,
    pub voiced: bool,
    /// Normalized autocorrelation at the chosen lag.
    pub strength: f64,
}

const PITCH_FRAME: usize = 400;
const PITCH_SHIFT: usize = 160;
const PITCH_MIN_HZ: f64 = 60.0;
const PITCH_MAX_HZ: f64 = 400.0;
const VOICING_THRESHOLD: f64 = 0.5;
/// Candidates within this much of the best correlation count as ties; the
/// shortest such lag wins, which suppresses period doubling.
const PEAK_TOLERANCE: f64 = 0.03;

/// Normalized-autocorrelation pitch tracker on 25 ms frames with a 10 ms
/// shift. Lags reach past the frame end; samples beyond the signal are zero.
pub fn pitch_track(w: &Waveform) -> Vec<PitchFrame> {
    let x = w.samples();
    let sr = w.sample_rate() as f64;
    let min_lag = (sr / PITCH_MAX_HZ).floor() as usize;
    let max_lag = (sr / PITCH_MIN_HZ).ceil() as usize;
    let n_frames = if x.len() < PITCH_FRAME {
        0
    } else {
        (x.len() - PITCH_FRAME) / PITCH_SHIFT + 1
    };
    let at = |i: usize| x.get(i).copied().unwrap_or(0.0);
    let unvoiced = PitchFrame {
        f0_hz: 0.0,
        voiced: false,
        strength: 0.0,
    };
    let mut out = Vec::with_capacity(n_frames);
    for f in 0..n_frames {
        let start = f * PITCH_SHIFT;
        let e0: f64 = (start..start + PITCH_FRAME).map(|i| at(i) * at(i)).sum();
        if e0 <= 1e-12 {
            out.push(unvoiced);
            continue;
        }
        let r: Vec<f64> = (min_lag - 1..=max_lag + 1)
            .map(|lag| {
                let mut num = 0.0;
                let mut el = 0.0;
                for i in start..start + PITCH_FRAME {
                    let v = at(i + lag);
                    num += at(i) * v;
                    el += v * v;
                }
                if el <= 0.0 {
                    0.0
                } else {
                    num / (e0 * el).sqrt()
                }
            })
            .collect();
        // r[j] belongs to lag min_lag - 1 + j; peaks are searched on the
        // interior so both neighbours exist for interpolation.
        let best = r[1..r.len() - 1].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if best < VOICING_THRESHOLD {
            out.push(unvoiced);
            continue;
        }
        let j = (1..r.len() - 1)
            .find(|&j| r[j] >= best - PEAK_TOLERANCE && r[j] >= r[j - 1] && r[j] >= r[j + 1])
            .unwrap_or_else(|| (1..r.len() - 1).find(|&j| r[j] == best).expect("best is attained"));
        let (a, b, c) = (r[j - 1], r[j], r[j + 1]);
        let denom = a - 2.0 * b + c;
        let offset = if denom < 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
        let lag = (min_lag - 1 + j) as f64 + offset.clamp(-0.5, 0.5);
        out.push(PitchFrame {
            f0_hz: sr / lag,
            voiced: true,
            strength: b,
        });
    }
    out
}

/// Pearson correlation summary over utterance pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitchStats {
    pub mean: f64,
    pub std: f64,
    pub pairs_used: usize,
    /// Pairs with fewer than ten jointly voiced frames or no pitch variation.
    pub pairs_skipped: usize,
}

const MIN_JOINT_VOICED: usize = 10;

/// Pearson correlation of two pitch tracks over frames voiced in both, or
/// `None` when fewer than ten such frames exist or either side is constant.
pub fn pitch_correlation(test: &[PitchFrame], original: &[PitchFrame]) -> Option<f64> {
    let (a, b): (Vec<f64>, Vec<f64>) = test
        .iter()
        .zip(original)
        .filter(|(p, q)| p.voiced && q.voiced)
        .map(|(p, q)| (p.f0_hz, q.f0_hz))
        .unzip();
    if a.len() < MIN_JOINT_VOICED {
        return None;
    }
    pearson(&a, &b)
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Mean and population standard deviation of per-pair pitch correlations.
pub fn pitch_correlation_stats(pairs: &[(&Waveform, &Waveform)]) -> Result<PitchStats> {
    let mut values = Vec::with_capacity(pairs.len());
    for (test, original) in pairs {
        if test.len() != original.len() {
            return Err(Error::LengthMismatch {
                left: test.len(),
                right: original.len(),
            });
        }
        if let Some(r) = pitch_correlation(&pitch_track(test), &pitch_track(original)) {
            values.push(r);
        }
    }
    stats_from_correlations(&values, pairs.len() - values.len())
}

pub(crate) fn stats_from_correlations(values: &[f64], skipped: usize) -> Result<PitchStats> {
    if values.is_empty() {
        return Err(Error::InvalidInput("every pair was skipped for pitch correlation".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(PitchStats {
        mean,
        std: var.sqrt(),
        pairs_used: values.len(),
        pairs_skipped: skipped,
    })
}
