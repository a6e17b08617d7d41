use crate::error::{Error, Result};

/// Canonical sample rate of every waveform handled by the crate.
pub const SAMPLE_RATE: u32 = 16_000;

/// A mono utterance with samples normalized to `[-1, 1]`.
///
/// Original, adversarial and restored speech all share this type.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
    pub speaker_id: String,
    pub utterance_id: String,
}

impl Waveform {
    /// Builds a waveform, rejecting empty, non-finite or out-of-range samples.
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidInput("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(Error::InvalidInput("waveform must not be empty".into()));
        }
        if let Some((i, s)) = samples
            .iter()
            .enumerate()
            .find(|(_, s)| !s.is_finite() || s.abs() > 1.0)
        {
            return Err(Error::InvalidInput(format!(
                "sample {i} = {s} outside [-1, 1]"
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
            speaker_id: String::new(),
            utterance_id: String::new(),
        })
    }

    /// Builds a waveform after clamping every sample into `[-1, 1]`.
    pub fn from_clamped(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("waveform sample".into()));
        }
        Self::new(samples.into_iter().map(|s| s.clamp(-1.0, 1.0)).collect(), sample_rate)
    }

    pub fn with_ids(mut self, speaker_id: impl Into<String>, utterance_id: impl Into<String>) -> Self {
        self.speaker_id = speaker_id.into();
        self.utterance_id = utterance_id.into();
        self
    }

    /// Same ids and rate, new samples (clamped into range).
    pub fn derive(&self, samples: Vec<f64>) -> Result<Self> {
        Ok(Self::from_clamped(samples, self.sample_rate)?
            .with_ids(self.speaker_id.clone(), self.utterance_id.clone()))
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean of squared samples.
    pub fn power(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64
    }

    pub fn max_abs_diff(&self, other: &Waveform) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch {
                left: self.len(),
                right: other.len(),
            });
        }
        Ok(self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}
