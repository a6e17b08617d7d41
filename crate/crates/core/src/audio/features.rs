//! Log-mel filterbank front-end with an exact backward pass to the samples.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::waveform::Waveform;
use crate::error::{Error, Result};

/// Additive floor inside the log of every mel energy.
pub const LOG_FLOOR: f64 = 1e-10;

/// `T x D` matrix of log mel energies, row-major by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    n_frames: usize,
    n_mels: usize,
    pub frame_shift_ms: f64,
    pub frame_length_ms: f64,
}

impl FeatureMatrix {
    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.n_mels..(t + 1) * self.n_mels]
    }

    pub fn get(&self, t: usize, m: usize) -> f64 {
        self.data[t * self.n_mels + m]
    }
}

/// Intermediate values needed to backpropagate through [`LogMel::forward`].
#[derive(Debug, Clone)]
pub struct LogMelCache {
    spectra: Vec<Complex<f64>>,
    energies: Vec<f64>,
    n_samples: usize,
    n_frames: usize,
}

/// Framing, periodic Hann window, power spectrum, triangular HTK-mel filters
/// and `ln(e + LOG_FLOOR)`. No pre-emphasis, no padding.
#[derive(Clone)]
pub struct LogMel {
    sample_rate: u32,
    n_mels: usize,
    frame_len: usize,
    shift: usize,
    n_fft: usize,
    n_bins: usize,
    window: Vec<f64>,
    /// `n_mels x n_bins`, row-major.
    filters: Vec<f64>,
    centers_hz: Vec<f64>,
    frame_shift_ms: f64,
    frame_length_ms: f64,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for LogMel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LogMel")
            .field("sample_rate", &self.sample_rate)
            .field("n_mels", &self.n_mels)
            .field("frame_len", &self.frame_len)
            .field("shift", &self.shift)
            .finish()
    }
}

pub(crate) fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub(crate) fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

impl LogMel {
    pub fn new(
        sample_rate: u32,
        n_mels: usize,
        frame_shift_ms: f64,
        frame_length_ms: f64,
    ) -> Result<Self> {
        if n_mels == 0 || frame_shift_ms <= 0.0 || frame_length_ms <= 0.0 {
            return Err(Error::InvalidInput(
                "mel count and frame timings must be positive".into(),
            ));
        }
        let frame_len = (sample_rate as f64 * frame_length_ms / 1000.0).round() as usize;
        let shift = (sample_rate as f64 * frame_shift_ms / 1000.0).round() as usize;
        if frame_len == 0 || shift == 0 {
            return Err(Error::InvalidInput("frame shorter than one sample".into()));
        }
        let n_fft = frame_len.next_power_of_two();
        let n_bins = n_fft / 2 + 1;
        let window = (0..frame_len)
            .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / frame_len as f64).cos())
            .collect();

        let nyquist = sample_rate as f64 / 2.0;
        let mel_max = hz_to_mel(nyquist);
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(mel_max * i as f64 / (n_mels + 1) as f64))
            .collect();
        let mut filters = vec![0.0; n_mels * n_bins];
        for m in 0..n_mels {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            for k in 0..n_bins {
                let f = k as f64 * sample_rate as f64 / n_fft as f64;
                let w = if f > lo && f <= center {
                    (f - lo) / (center - lo)
                } else if f > center && f < hi {
                    (hi - f) / (hi - center)
                } else {
                    0.0
                };
                filters[m * n_bins + k] = w;
            }
        }
        let fft = FftPlanner::new().plan_fft_forward(n_fft);
        Ok(Self {
            sample_rate,
            n_mels,
            frame_len,
            shift,
            n_fft,
            n_bins,
            window,
            filters,
            centers_hz: edges[1..=n_mels].to_vec(),
            frame_shift_ms,
            frame_length_ms,
            fft,
        })
    }

    /// 40 bands, 10 ms shift, 25 ms frames at 16 kHz.
    pub fn standard() -> Self {
        Self::new(super::SAMPLE_RATE, 40, 10.0, 25.0).expect("standard front-end parameters")
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn shift(&self) -> usize {
        self.shift
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// Center frequency of every mel band in Hz.
    pub fn band_centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    pub fn n_frames(&self, n_samples: usize) -> usize {
        if n_samples < self.frame_len {
            0
        } else {
            (n_samples - self.frame_len) / self.shift + 1
        }
    }

    pub fn compute(&self, samples: &[f64]) -> Result<FeatureMatrix> {
        self.forward(samples).map(|(f, _)| f)
    }

    pub fn forward(&self, samples: &[f64]) -> Result<(FeatureMatrix, LogMelCache)> {
        let n_frames = self.n_frames(samples.len());
        if n_frames == 0 {
            return Err(Error::TooShort {
                samples: samples.len(),
                required: self.frame_len,
            });
        }
        let mut spectra = Vec::with_capacity(n_frames * self.n_bins);
        let mut energies = vec![0.0; n_frames * self.n_mels];
        let mut data = vec![0.0; n_frames * self.n_mels];
        let mut buf = vec![Complex::new(0.0, 0.0); self.n_fft];
        for t in 0..n_frames {
            let frame = &samples[t * self.shift..t * self.shift + self.frame_len];
            for (b, (x, w)) in buf.iter_mut().zip(frame.iter().zip(&self.window)) {
                *b = Complex::new(x * w, 0.0);
            }
            buf[self.frame_len..].fill(Complex::new(0.0, 0.0));
            self.fft.process(&mut buf);
            spectra.extend_from_slice(&buf[..self.n_bins]);
            let spec = &buf[..self.n_bins];
            for m in 0..self.n_mels {
                let row = &self.filters[m * self.n_bins..(m + 1) * self.n_bins];
                let e: f64 = row
                    .iter()
                    .zip(spec)
                    .map(|(w, x)| w * x.norm_sqr())
                    .sum();
                energies[t * self.n_mels + m] = e;
                data[t * self.n_mels + m] = (e + LOG_FLOOR).ln();
            }
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("log-mel feature".into()));
        }
        Ok((
            FeatureMatrix {
                data,
                n_frames,
                n_mels: self.n_mels,
                frame_shift_ms: self.frame_shift_ms,
                frame_length_ms: self.frame_length_ms,
            },
            LogMelCache {
                spectra,
                energies,
                n_samples: samples.len(),
                n_frames,
            },
        ))
    }

    /// Vector-Jacobian product: maps `d loss / d features` (row-major `T x D`)
    /// to `d loss / d samples`.
    pub fn backward(&self, cache: &LogMelCache, grad: &[f64]) -> Vec<f64> {
        assert_eq!(grad.len(), cache.n_frames * self.n_mels);
        let mut out = vec![0.0; cache.n_samples];
        let mut d_power = vec![0.0; self.n_bins];
        let mut buf = vec![Complex::new(0.0, 0.0); self.n_fft];
        for t in 0..cache.n_frames {
            d_power.fill(0.0);
            for m in 0..self.n_mels {
                let idx = t * self.n_mels + m;
                let de = grad[idx] / (cache.energies[idx] + LOG_FLOOR);
                if de == 0.0 {
                    continue;
                }
                let row = &self.filters[m * self.n_bins..(m + 1) * self.n_bins];
                for (d, w) in d_power.iter_mut().zip(row) {
                    *d += w * de;
                }
            }
            let spec = &cache.spectra[t * self.n_bins..(t + 1) * self.n_bins];
            for (b, (d, x)) in buf.iter_mut().zip(d_power.iter().zip(spec)) {
                *b = x.conj() * *d;
            }
            buf[self.n_bins..].fill(Complex::new(0.0, 0.0));
            self.fft.process(&mut buf);
            let seg = &mut out[t * self.shift..t * self.shift + self.frame_len];
            for (n, o) in seg.iter_mut().enumerate() {
                *o += 2.0 * buf[n].re * self.window[n];
            }
        }
        out
    }
}

/// Log-mel features of a waveform with the given band count and timings.
pub fn log_mel_filterbank(
    w: &Waveform,
    n_mels: usize,
    frame_shift_ms: f64,
    frame_length_ms: f64,
) -> Result<FeatureMatrix> {
    LogMel::new(w.sample_rate(), n_mels, frame_shift_ms, frame_length_ms)?.compute(w.samples())
}
