//! Deterministic synthetic speakers standing in for a recorded corpus.
//!
//! A speaker is a fundamental frequency, three formant resonances, a spectral
//! tilt and a breathiness level. An utterance renders a harmonic source with a
//! slow intonation contour and small F0 jitter, adds formant-filtered noise,
//! applies a syllabic amplitude envelope and peak-normalizes to 0.5.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::corpus::{Corpus, Gender, Speaker, Split};
use super::waveform::{Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::seed::mix_seed;

const PEAK: f64 = 0.5;
const GENDER_F0_THRESHOLD_HZ: f64 = 165.0;
const MAX_HARMONIC_HZ: f64 = 7200.0;

/// Seeded voice parameters of one synthetic speaker.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerVoice {
    pub f0_hz: f64,
    /// `(center Hz, bandwidth Hz, gain)` for three resonances.
    pub formants: [(f64, f64, f64); 3],
    pub tilt: f64,
    pub breathiness: f64,
}

impl SpeakerVoice {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        let f0_hz = rng.gen_range(80.0..300.0);
        let formants = [
            (rng.gen_range(300.0..900.0), rng.gen_range(60.0..160.0), 1.0),
            (
                rng.gen_range(900.0..2400.0),
                rng.gen_range(80.0..200.0),
                rng.gen_range(0.4..0.9),
            ),
            (
                rng.gen_range(2400.0..3800.0),
                rng.gen_range(120.0..300.0),
                rng.gen_range(0.2..0.6),
            ),
        ];
        Self {
            f0_hz,
            formants,
            tilt: rng.gen_range(0.4..1.2),
            breathiness: rng.gen_range(0.03..0.25),
        }
    }

    pub fn gender(&self) -> Gender {
        if self.f0_hz >= GENDER_F0_THRESHOLD_HZ {
            Gender::Female
        } else {
            Gender::Male
        }
    }

    fn envelope(&self, f: f64, formant_scale: f64) -> f64 {
        let resonances: f64 = self
            .formants
            .iter()
            .map(|&(c, bw, g)| {
                let d = (f - c * formant_scale) / bw;
                g / (1.0 + d * d)
            })
            .sum();
        (resonances + 0.02) * (1.0 + f / 500.0).powf(-self.tilt)
    }

    fn render(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let sr = SAMPLE_RATE as f64;
        let f0_base = self.f0_hz * (1.0 + rng.gen_range(-0.05..0.05));
        let formant_scale = 1.0 + rng.gen_range(-0.04..0.04);
        let inton_depth = rng.gen_range(0.06..0.15);
        let inton_rate = rng.gen_range(0.8..2.5);
        let inton_phase = rng.gen_range(0.0..2.0 * PI);
        let am_depth = rng.gen_range(0.2..0.5);
        let am_rate = rng.gen_range(2.5..5.0);
        let am_phase = rng.gen_range(0.0..2.0 * PI);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");

        // Jitter: smoothed random walk updated every 10 ms.
        let hop = 160;
        let knots: Vec<f64> = {
            let mut v = Vec::with_capacity(n / hop + 2);
            let mut j = 0.0;
            for _ in 0..n / hop + 2 {
                j = 0.8 * j + 0.004 * normal.sample(rng);
                v.push(j);
            }
            v
        };

        let mut voiced = vec![0.0; n];
        let mut phase = 0.0;
        let mut amps: Vec<f64> = Vec::new();
        for (i, v) in voiced.iter_mut().enumerate() {
            let t = i as f64 / sr;
            let k = i / hop;
            let frac = (i % hop) as f64 / hop as f64;
            let jitter = knots[k] * (1.0 - frac) + knots[k + 1] * frac;
            let f0 = f0_base * (1.0 + inton_depth * (2.0 * PI * inton_rate * t + inton_phase).sin() + jitter);
            if i % 32 == 0 {
                let n_harm = (MAX_HARMONIC_HZ / f0).floor() as usize;
                amps = (1..=n_harm)
                    .map(|h| self.envelope(h as f64 * f0, formant_scale))
                    .collect();
            }
            phase += 2.0 * PI * f0 / sr;
            if phase > 2.0 * PI {
                phase -= 2.0 * PI;
            }
            *v = amps
                .iter()
                .enumerate()
                .map(|(h, a)| a * ((h + 1) as f64 * phase).sin())
                .sum();
        }

        // Breath noise through the first two resonances.
        let white: Vec<f64> = (0..n).map(|_| normal.sample(rng)).collect();
        let mut noise = vec![0.0; n];
        for &(c, bw, g) in &self.formants[..2] {
            let r = (-PI * bw / sr).exp();
            let theta = 2.0 * PI * c * formant_scale / sr;
            let (a1, a2) = (2.0 * r * theta.cos(), -r * r);
            let (mut y1, mut y2) = (0.0, 0.0);
            for (o, &x) in noise.iter_mut().zip(&white) {
                let y = (1.0 - r) * x + a1 * y1 + a2 * y2;
                y2 = y1;
                y1 = y;
                *o += g * y;
            }
        }
        let rms = |s: &[f64]| (s.iter().map(|x| x * x).sum::<f64>() / s.len() as f64).sqrt();
        let noise_gain = self.breathiness * rms(&voiced) / rms(&noise).max(1e-12);

        let mut out: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / sr;
                let am = 1.0 - am_depth * (0.5 + 0.5 * (2.0 * PI * am_rate * t + am_phase).sin());
                am * (voiced[i] + noise_gain * noise[i])
            })
            .collect();
        let peak = out.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if peak > 0.0 {
            out.iter_mut().for_each(|x| *x *= PEAK / peak);
        }
        out
    }
}

/// Deterministic corpus of `n_speakers` synthetic speakers with
/// `utts_per_speaker` utterances of `utt_seconds` each.
///
/// Speaker ids embed the seed, so corpora drawn with different seeds never
/// share a speaker.
pub fn synth_corpus(
    n_speakers: usize,
    utts_per_speaker: usize,
    utt_seconds: f64,
    seed: u64,
) -> Result<Corpus> {
    if n_speakers == 0 || utts_per_speaker == 0 {
        return Err(Error::InvalidInput("speaker and utterance counts must be at least 1".into()));
    }
    let n = (utt_seconds * SAMPLE_RATE as f64).round() as usize;
    if n == 0 {
        return Err(Error::InvalidInput("utterance duration must be positive".into()));
    }
    let mut speaker_rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x5eed));
    let mut speakers = Vec::with_capacity(n_speakers);
    let mut utterances = Vec::with_capacity(n_speakers * utts_per_speaker);
    for s in 0..n_speakers {
        let voice = SpeakerVoice::draw(&mut speaker_rng);
        let id = format!("s{seed}-{s:03}");
        for u in 0..utts_per_speaker {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, (s * 10_000 + u + 1) as u64));
            let samples = voice.render(n, &mut rng);
            utterances.push(
                Waveform::new(samples, SAMPLE_RATE)?.with_ids(id.clone(), format!("{id}-u{u:02}")),
            );
        }
        speakers.push(Speaker {
            id,
            gender: voice.gender(),
        });
    }
    Corpus::new(utterances, speakers, Split::Train)
}
