//! Desk-scale speaker encoder.
//!
//! Log-mel features are normalized with fixed per-band statistics, passed
//! through two valid-padded temporal convolutions with ReLU, pooled into
//! per-channel mean and standard deviation, and projected to the embedding.
//! A linear classifier over the training speakers sits on top of the
//! embedding during training only.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use rand_distr::{Distribution, StandardNormal};

use crate::audio::{Corpus, LogMel, LogMelCache, Waveform};
use crate::error::{Error, Result};
use crate::nn::{relu, relu_backward, zeros_like, Adam, Conv1d, ConvCache, Linear, Module, Tensor3};

const POOL_EPS: f64 = 1e-5;

/// Fixed-length speaker representation.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerEmbedding {
    values: Vec<f64>,
}

impl SpeakerEmbedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("empty embedding".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding".into()));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// `a·b / (|a| |b|)`.
pub fn cosine_score(a: &SpeakerEmbedding, b: &SpeakerEmbedding) -> Result<f64> {
    cosine_with_grad(a.values(), b.values()).map(|(c, _)| c)
}

/// Cosine similarity and its gradient with respect to `b`.
pub fn cosine_with_grad(a: &[f64], b: &[f64]) -> Result<(f64, Vec<f64>)> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let cos = dot / (na * nb);
    let grad = a
        .iter()
        .zip(b)
        .map(|(x, y)| x / (na * nb) - cos * y / (nb * nb))
        .collect();
    Ok((cos.clamp(-1.0, 1.0), grad))
}

/// Maps d loss / d embedding back to d loss / d samples.
pub type Pullback<'a> = Box<dyn Fn(&[f64]) -> Vec<f64> + 'a>;

/// An embedding extractor whose output can be differentiated with respect to
/// the input samples.
pub trait DifferentiableEmbedder {
    fn embed_dim(&self) -> usize;

    fn embed_samples(&self, samples: &[f64]) -> Result<Vec<f64>>;

    fn embed_with_pullback<'a>(&'a self, samples: &[f64]) -> Result<(Vec<f64>, Pullback<'a>)>;

    fn embed(&self, w: &Waveform) -> Result<SpeakerEmbedding> {
        SpeakerEmbedding::new(self.embed_samples(w.samples())?)
    }
}

/// `d loss / d samples` for a scalar loss of the embedding.
///
/// `loss` returns the loss value and its gradient with respect to the
/// embedding. Non-finite gradients are reported as errors.
pub fn input_gradient<E, F>(model: &E, samples: &[f64], loss: F) -> Result<(f64, Vec<f64>)>
where
    E: DifferentiableEmbedder + ?Sized,
    F: FnOnce(&SpeakerEmbedding) -> Result<(f64, Vec<f64>)>,
{
    let (emb, pullback) = model.embed_with_pullback(samples)?;
    let emb = SpeakerEmbedding::new(emb)?;
    let (value, d_emb) = loss(&emb)?;
    if d_emb.len() != emb.dim() {
        return Err(Error::DimensionMismatch {
            left: d_emb.len(),
            right: emb.dim(),
        });
    }
    let grad = pullback(&d_emb);
    if !value.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("input gradient at sample {i}")));
    }
    Ok((value, grad))
}

/// `embed(x) = W x`, used for hand-checkable attack traces.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEmbedder {
    /// `[dim][input]`
    pub weight: Vec<f64>,
    pub dim: usize,
    pub input: usize,
}

impl LinearEmbedder {
    pub fn new(weight: Vec<f64>, dim: usize, input: usize) -> Result<Self> {
        if weight.len() != dim * input {
            return Err(Error::DimensionMismatch {
                left: weight.len(),
                right: dim * input,
            });
        }
        Ok(Self { weight, dim, input })
    }
}

impl DifferentiableEmbedder for LinearEmbedder {
    fn embed_dim(&self) -> usize {
        self.dim
    }

    fn embed_samples(&self, samples: &[f64]) -> Result<Vec<f64>> {
        if samples.len() != self.input {
            return Err(Error::LengthMismatch {
                left: samples.len(),
                right: self.input,
            });
        }
        Ok(self
            .weight
            .chunks(self.input)
            .map(|row| row.iter().zip(samples).map(|(w, x)| w * x).sum())
            .collect())
    }

    fn embed_with_pullback<'a>(&'a self, samples: &[f64]) -> Result<(Vec<f64>, Pullback<'a>)> {
        let emb = self.embed_samples(samples)?;
        let pullback = move |g: &[f64]| {
            let mut out = vec![0.0; self.input];
            for (row, gi) in self.weight.chunks(self.input).zip(g) {
                for (o, w) in out.iter_mut().zip(row) {
                    *o += gi * w;
                }
            }
            out
        };
        Ok((emb, Box::new(pullback)))
    }
}

/// Encoder architecture and training schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub n_mels: usize,
    pub channels: usize,
    pub embed_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub crop_seconds: f64,
    /// SNR range in dB of the white noise added to half of the training
    /// crops; `None` trains on clean crops only.
    pub augment_snr_db: Option<[f64; 2]>,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            n_mels: 40,
            channels: 64,
            embed_dim: 32,
            epochs: 30,
            batch_size: 8,
            learning_rate: 1e-3,
            crop_seconds: 1.0,
            augment_snr_db: None,
            seed: 1,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_mels == 0 || self.channels == 0 || self.embed_dim == 0 {
            return Err(Error::Config("encoder widths must be positive".into()));
        }
        if self.batch_size == 0 || self.learning_rate <= 0.0 || self.crop_seconds <= 0.0 {
            return Err(Error::Config("encoder batch size, learning rate and crop length must be positive".into()));
        }
        if let Some([lo, hi]) = self.augment_snr_db {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Config(format!("augmentation SNR range [{lo}, {hi}] is invalid")));
            }
        }
        Ok(())
    }
}

const K1: usize = 5;
const K2: usize = 3;

/// A trained or freshly initialized speaker encoder.
#[derive(Debug, Clone)]
pub struct EncoderModel {
    pub config: EncoderConfig,
    pub n_classes: usize,
    frontend: LogMel,
    pub feat_mean: Vec<f64>,
    pub feat_std: Vec<f64>,
    pub conv1: Conv1d,
    pub conv2: Conv1d,
    pub proj: Linear,
    pub classifier: Linear,
    /// Accuracy on the training utterances after the last epoch.
    pub train_accuracy: f64,
}

struct EncoderCache {
    mel: LogMelCache,
    n_frames: usize,
    c1: ConvCache,
    h1: Tensor3,
    c2: ConvCache,
    h2: Tensor3,
    mean: Vec<f64>,
    std: Vec<f64>,
    pooled: Vec<f64>,
}

impl EncoderModel {
    /// Randomly initialized model with identity feature normalization.
    pub fn init(config: EncoderConfig, n_classes: usize) -> Result<Self> {
        config.validate()?;
        if n_classes == 0 {
            return Err(Error::Config("encoder needs at least one class".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let frontend = LogMel::new(crate::audio::SAMPLE_RATE, config.n_mels, 10.0, 25.0)?;
        let c = config.channels;
        Ok(Self {
            conv1: Conv1d::new(config.n_mels, c, K1, 1, 0, &mut rng),
            conv2: Conv1d::new(c, c, K2, 1, 0, &mut rng),
            proj: Linear::new(2 * c, config.embed_dim, &mut rng),
            classifier: Linear::new(config.embed_dim, n_classes, &mut rng),
            feat_mean: vec![0.0; config.n_mels],
            feat_std: vec![1.0; config.n_mels],
            n_classes,
            frontend,
            config,
            train_accuracy: 0.0,
        })
    }

    /// Fewest samples that still yield one pooled frame.
    pub fn min_samples(&self) -> usize {
        self.frontend.frame_len() + (K1 + K2 - 2) * self.frontend.shift()
    }

    fn forward(&self, samples: &[f64]) -> Result<(Vec<f64>, EncoderCache)> {
        if samples.len() < self.min_samples() {
            return Err(Error::TooShort {
                samples: samples.len(),
                required: self.min_samples(),
            });
        }
        let (feats, mel) = self.frontend.forward(samples)?;
        let (t, d) = (feats.n_frames(), feats.n_mels());
        let mut x = Tensor3::zeros(1, d, t);
        for ti in 0..t {
            for m in 0..d {
                x.data[m * t + ti] = (feats.get(ti, m) - self.feat_mean[m]) / self.feat_std[m];
            }
        }
        let (mut h1, c1) = self.conv1.forward(&x);
        relu(&mut h1.data);
        let (mut h2, c2) = self.conv2.forward(&h1);
        relu(&mut h2.data);
        let (c, l) = (h2.c, h2.l);
        let mut mean = vec![0.0; c];
        let mut std = vec![0.0; c];
        for ci in 0..c {
            let row = &h2.data[ci * l..(ci + 1) * l];
            let mu = row.iter().sum::<f64>() / l as f64;
            let var = row.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / l as f64;
            mean[ci] = mu;
            std[ci] = (var + POOL_EPS).sqrt();
        }
        let pooled: Vec<f64> = mean.iter().chain(&std).copied().collect();
        let emb = self.proj.forward(&pooled);
        if emb.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("encoder activation".into()));
        }
        Ok((
            emb,
            EncoderCache {
                mel,
                n_frames: t,
                c1,
                h1,
                c2,
                h2,
                mean,
                std,
                pooled,
            },
        ))
    }

    /// Backpropagates `d_emb`; accumulates parameter gradients into `grad`
    /// and returns the sample gradient when `input_grad` is set.
    fn backward(
        &self,
        cache: &EncoderCache,
        d_emb: &[f64],
        mut grad: Option<&mut EncoderModel>,
        input_grad: bool,
    ) -> Option<Vec<f64>> {
        let d_pooled = self
            .proj
            .backward(&cache.pooled, d_emb, grad.as_deref_mut().map(|g| &mut g.proj));
        let (c, l) = (cache.h2.c, cache.h2.l);
        let mut g2 = Tensor3::zeros(1, c, l);
        for ci in 0..c {
            let row = &cache.h2.data[ci * l..(ci + 1) * l];
            let dm = d_pooled[ci] / l as f64;
            let ds = d_pooled[c + ci] / (l as f64 * cache.std[ci]);
            for (g, h) in g2.data[ci * l..(ci + 1) * l].iter_mut().zip(row) {
                *g = dm + ds * (h - cache.mean[ci]);
            }
        }
        relu_backward(&cache.h2.data, &mut g2.data);
        let mut g1 = self
            .conv2
            .backward(&cache.c2, &g2, grad.as_deref_mut().map(|g| &mut g.conv2), true)
            .expect("input gradient requested");
        relu_backward(&cache.h1.data, &mut g1.data);
        let gx = self
            .conv1
            .backward(&cache.c1, &g1, grad.map(|g| &mut g.conv1), input_grad)?;
        let (t, d) = (cache.n_frames, self.config.n_mels);
        let mut d_feats = vec![0.0; t * d];
        for ti in 0..t {
            for m in 0..d {
                d_feats[ti * d + m] = gx.data[m * t + ti] / self.feat_std[m];
            }
        }
        Some(self.frontend.backward(&cache.mel, &d_feats))
    }

    fn logits(&self, emb: &[f64]) -> Vec<f64> {
        self.classifier.forward(emb)
    }

    /// Index of the highest-scoring training speaker.
    pub fn classify(&self, samples: &[f64]) -> Result<usize> {
        let emb = self.embed_samples(samples)?;
        Ok(argmax(&self.logits(&emb)))
    }

    fn fit_normalization(&mut self, corpus: &Corpus) -> Result<()> {
        let d = self.config.n_mels;
        let mut sum = vec![0.0; d];
        let mut sq = vec![0.0; d];
        let mut count = 0usize;
        for u in corpus.utterances() {
            let f = self.frontend.compute(u.samples())?;
            for t in 0..f.n_frames() {
                for (m, v) in f.frame(t).iter().enumerate() {
                    sum[m] += v;
                    sq[m] += v * v;
                }
            }
            count += f.n_frames();
        }
        for m in 0..d {
            let mu = sum[m] / count as f64;
            self.feat_mean[m] = mu;
            self.feat_std[m] = (sq[m] / count as f64 - mu * mu).max(0.0).sqrt().max(1e-3);
        }
        Ok(())
    }
}

impl DifferentiableEmbedder for EncoderModel {
    fn embed_dim(&self) -> usize {
        self.config.embed_dim
    }

    fn embed_samples(&self, samples: &[f64]) -> Result<Vec<f64>> {
        self.forward(samples).map(|(e, _)| e)
    }

    fn embed_with_pullback<'a>(&'a self, samples: &[f64]) -> Result<(Vec<f64>, Pullback<'a>)> {
        let (emb, cache) = self.forward(samples)?;
        let pullback = move |g: &[f64]| {
            self.backward(&cache, g, None, true)
                .expect("input gradient requested")
        };
        Ok((emb, Box::new(pullback)))
    }
}

impl Module for EncoderModel {
    fn params(&self) -> Vec<&[f64]> {
        let mut p = self.conv1.params();
        p.extend(self.conv2.params());
        p.extend(self.proj.params());
        p.extend(self.classifier.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p = self.conv1.params_mut();
        p.extend(self.conv2.params_mut());
        p.extend(self.proj.params_mut());
        p.extend(self.classifier.params_mut());
        p
    }

    fn buffers(&self) -> Vec<&[f64]> {
        vec![&self.feat_mean, &self.feat_std]
    }

    fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.feat_mean, &mut self.feat_std]
    }
}

/// Embedding of a waveform.
pub fn embed(model: &EncoderModel, w: &Waveform) -> Result<SpeakerEmbedding> {
    model.embed(w)
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}

/// Softmax cross-entropy and its gradient with respect to the logits.
fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let mut grad: Vec<f64> = exps.iter().map(|e| e / total).collect();
    let loss = -(grad[label].ln());
    grad[label] -= 1.0;
    (loss, grad)
}

fn add_white_noise(s: &[f64], snr_db: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let noise: Vec<f64> = (0..s.len()).map(|_| StandardNormal.sample(rng)).collect();
    let p_s = s.iter().map(|v| v * v).sum::<f64>();
    let p_n = noise.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
    let scale = (p_s / (p_n * 10f64.powf(snr_db / 10.0))).sqrt();
    s.iter().zip(&noise).map(|(x, n)| (x + scale * n).clamp(-1.0, 1.0)).collect()
}

/// Trains a speaker classifier on `corpus` and returns it as an encoder.
///
/// Each epoch visits every utterance once as a random crop of
/// `crop_seconds`; utterances shorter than that are used whole. With
/// `augment_snr_db` set, half of the crops get white noise at a random SNR
/// from that range.
pub fn train_encoder(corpus: &Corpus, config: &EncoderConfig) -> Result<EncoderModel> {
    config.validate()?;
    let groups = corpus.by_speaker();
    if groups.len() < 2 {
        return Err(Error::DegenerateCorpus("encoder training needs at least 2 speakers".into()));
    }
    if let Some((id, _)) = groups.iter().find(|(_, u)| u.len() < 2) {
        return Err(Error::DegenerateCorpus(format!("speaker {id} has fewer than 2 utterances")));
    }
    let labels: Vec<usize> = corpus
        .utterances()
        .iter()
        .map(|u| corpus.speaker_index(&u.speaker_id).expect("validated corpus"))
        .collect();
    let mut model = EncoderModel::init(config.clone(), corpus.speakers().len())?;
    model.fit_normalization(corpus)?;
    let crop = (config.crop_seconds * crate::audio::SAMPLE_RATE as f64).round() as usize;
    let crop = crop.max(model.min_samples());
    if let Some(u) = corpus.utterances().iter().find(|u| u.len() < model.min_samples()) {
        return Err(Error::TooShort {
            samples: u.len(),
            required: model.min_samples(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(crate::seed::mix_seed(config.seed, 0xe11c));
    let mut opt = Adam::new(config.learning_rate);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for (bi, batch) in order.chunks(config.batch_size).enumerate() {
            let mut grad = zeros_like(&model);
            let mut loss = 0.0;
            for &i in batch {
                let s = corpus.utterances()[i].samples();
                let seg = if s.len() > crop {
                    let start = rng.gen_range(0..=s.len() - crop);
                    &s[start..start + crop]
                } else {
                    s
                };
                let noisy;
                let seg = match config.augment_snr_db {
                    Some([lo, hi]) if rng.gen_bool(0.5) => {
                        noisy = add_white_noise(seg, rng.gen_range(lo..=hi), &mut rng);
                        &noisy[..]
                    }
                    _ => seg,
                };
                let (emb, cache) = model.forward(seg)?;
                let logits = model.logits(&emb);
                let (l, dlogits) = cross_entropy(&logits, labels[i]);
                loss += l;
                let d_emb = model.classifier.backward(&emb, &dlogits, Some(&mut grad.classifier));
                model.backward(&cache, &d_emb, Some(&mut grad), false);
            }
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: bi,
                    detail: "encoder cross-entropy".into(),
                });
            }
            let scale = 1.0 / batch.len() as f64;
            let grads: Vec<Vec<f64>> = grad
                .params()
                .iter()
                .map(|g| g.iter().map(|v| v * scale).collect())
                .collect();
            opt.step(model.params_mut(), grads.iter().map(|g| g.as_slice()).collect());
        }
    }

    let mut correct = 0;
    for (u, &label) in corpus.utterances().iter().zip(&labels) {
        if model.classify(u.samples())? == label {
            correct += 1;
        }
    }
    model.train_accuracy = correct as f64 / corpus.len() as f64;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{synth_corpus, Gender, Speaker, Split, SAMPLE_RATE};
    use crate::nn::check::rel_err;

    fn emb(v: &[f64]) -> SpeakerEmbedding {
        SpeakerEmbedding::new(v.to_vec()).unwrap()
    }

    #[test]
    fn white_noise_hits_the_requested_snr() {
        let s: Vec<f64> = (0..4000).map(|i| 0.3 * (i as f64 * 0.05).sin()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let noisy = add_white_noise(&s, 20.0, &mut rng);
        let p_s: f64 = s.iter().map(|v| v * v).sum();
        let p_n: f64 = noisy.iter().zip(&s).map(|(a, b)| (a - b).powi(2)).sum();
        assert!((10.0 * (p_s / p_n).log10() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn augmentation_range_is_validated() {
        let bad = EncoderConfig { augment_snr_db: Some([30.0, 10.0]), ..EncoderConfig::default() };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let nan = EncoderConfig { augment_snr_db: Some([f64::NAN, 10.0]), ..EncoderConfig::default() };
        assert!(matches!(nan.validate(), Err(Error::Config(_))));
        let ok = EncoderConfig { augment_snr_db: Some([10.0, 10.0]), ..EncoderConfig::default() };
        assert!(ok.validate().is_ok());
    }

    #[test]
    fn cosine_trivial_cases() {
        let a = emb(&[0.3, -1.2, 2.0]);
        assert!((cosine_score(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let three: Vec<f64> = a.values().iter().map(|v| 3.0 * v).collect();
        assert!((cosine_score(&a, &emb(&three)).unwrap() - 1.0).abs() < 1e-12);
        assert!(cosine_score(&emb(&[1.0, 0.0]), &emb(&[0.0, 1.0])).unwrap().abs() < 1e-15);
        assert!(matches!(
            cosine_score(&emb(&[0.0, 0.0]), &emb(&[1.0, 0.0])),
            Err(Error::ZeroNorm)
        ));
        assert!(matches!(
            cosine_score(&emb(&[1.0]), &emb(&[1.0, 0.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn cosine_gradient_matches_finite_differences() {
        let a = [0.4, -0.7, 1.1];
        let b = [1.3, 0.2, -0.5];
        let (_, g) = cosine_with_grad(&a, &b).unwrap();
        for i in 0..3 {
            let mut p = b;
            let mut m = b;
            p[i] += 1e-6;
            m[i] -= 1e-6;
            let fd = (cosine_with_grad(&a, &p).unwrap().0 - cosine_with_grad(&a, &m).unwrap().0) / 2e-6;
            assert!(rel_err(fd, g[i]) < 1e-6);
        }
    }

    fn small_config() -> EncoderConfig {
        EncoderConfig {
            channels: 16,
            embed_dim: 8,
            epochs: 2,
            ..EncoderConfig::default()
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let model = EncoderModel::init(small_config(), 3).unwrap();
        let corpus = synth_corpus(1, 1, 0.3, 4).unwrap();
        let x = corpus.utterances()[0].samples().to_vec();
        let target: Vec<f64> = (0..8).map(|i| (i as f64 * 0.7).sin()).collect();
        let loss = |s: &[f64]| {
            let e = model.embed_samples(s).unwrap();
            -cosine_with_grad(&target, &e).unwrap().0
        };
        let (_, g) = input_gradient(&model, &x, |e| {
            let (c, d) = cosine_with_grad(&target, e.values())?;
            Ok((-c, d.iter().map(|v| -v).collect()))
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let i = rng.gen_range(0..x.len());
            let h = 1e-5;
            let mut p = x.clone();
            let mut m = x.clone();
            p[i] += h;
            m[i] -= h;
            let fd = (loss(&p) - loss(&m)) / (2.0 * h);
            assert!(rel_err(fd, g[i]) < 1e-3 || (fd - g[i]).abs() < 1e-9, "i={i} fd={fd} an={}", g[i]);
        }
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let model = EncoderModel::init(small_config(), 3).unwrap();
        let x = synth_corpus(1, 1, 0.3, 4).unwrap().utterances()[0].samples().to_vec();
        let (_, g) = input_gradient(&model, &x, |e| Ok((2.5, vec![0.0; e.dim()]))).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn linear_embedder_gradient_scales_with_loss() {
        let m = LinearEmbedder::new(vec![1.0, 0.0, 0.5, 2.0], 2, 2).unwrap();
        let x = [0.3, -0.2];
        let (_, g1) = input_gradient(&m, &x, |e| Ok((e.values()[0], vec![1.0, 1.0]))).unwrap();
        let (_, g3) = input_gradient(&m, &x, |e| Ok((3.0 * e.values()[0], vec![3.0, 3.0]))).unwrap();
        assert_eq!(g1, vec![1.5, 2.0]);
        assert_eq!(g3, vec![4.5, 6.0]);
    }

    #[test]
    fn too_short_input_is_rejected() {
        let model = EncoderModel::init(small_config(), 2).unwrap();
        assert!(matches!(
            model.embed_samples(&vec![0.1; 500]),
            Err(Error::TooShort { .. })
        ));
    }

    #[test]
    fn self_concatenation_leaves_pooled_embedding_unchanged() {
        // Period of two frame shifts: frames alternate between two patterns,
        // and both lengths give an even number of pooled frames.
        let model = EncoderModel::init(small_config(), 2).unwrap();
        let x: Vec<f64> = (0..16000)
            .map(|n| {
                let t = n as f64 / SAMPLE_RATE as f64;
                (1..=6)
                    .map(|h| (2.0 * std::f64::consts::PI * 50.0 * h as f64 * t).sin() / h as f64)
                    .sum::<f64>()
                    * 0.2
            })
            .collect();
        let mut xx = x.clone();
        xx.extend_from_slice(&x);
        let a = model.embed_samples(&x).unwrap();
        let b = model.embed_samples(&xx).unwrap();
        let diff: f64 = a.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = a.iter().map(|p| p * p).sum::<f64>().sqrt();
        assert!(diff / norm < 1e-6, "relative change {}", diff / norm);
    }

    #[test]
    fn small_perturbations_move_embedding_little() {
        let model = EncoderModel::init(small_config(), 2).unwrap();
        let x = synth_corpus(1, 1, 0.5, 2).unwrap().utterances()[0].samples().to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y: Vec<f64> = x.iter().map(|v| v + rng.gen_range(-1e-6..1e-6)).collect();
        let a = model.embed_samples(&x).unwrap();
        let b = model.embed_samples(&y).unwrap();
        let d: f64 = a.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        assert!(d < 1e-3);
    }

    fn tone(freq: f64, phase: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| 0.4 * (2.0 * std::f64::consts::PI * freq * i as f64 / SAMPLE_RATE as f64 + phase).sin())
            .collect()
    }

    #[test]
    fn separable_two_speaker_toy_reaches_full_accuracy() {
        let mut utts = Vec::new();
        for (spk, f) in [("lo", 200.0), ("hi", 3000.0)] {
            for u in 0..4 {
                let w = Waveform::new(tone(f, u as f64, 8000), SAMPLE_RATE)
                    .unwrap()
                    .with_ids(spk, format!("{spk}-{u}"));
                utts.push(w);
            }
        }
        let speakers = vec![
            Speaker { id: "lo".into(), gender: Gender::Male },
            Speaker { id: "hi".into(), gender: Gender::Female },
        ];
        let corpus = Corpus::new(utts, speakers, Split::Train).unwrap();
        let cfg = EncoderConfig {
            epochs: 10,
            batch_size: 4,
            crop_seconds: 0.25,
            ..small_config()
        };
        let model = train_encoder(&corpus, &cfg).unwrap();
        assert_eq!(model.train_accuracy, 1.0);
    }

    #[test]
    fn training_is_deterministic_and_rejects_degenerate_corpora() {
        let corpus = synth_corpus(3, 2, 0.4, 8).unwrap();
        let cfg = small_config();
        let a = train_encoder(&corpus, &cfg).unwrap();
        let b = train_encoder(&corpus, &cfg).unwrap();
        assert_eq!(a.flat_state(), b.flat_state());

        let one = synth_corpus(1, 4, 0.4, 8).unwrap();
        assert!(matches!(train_encoder(&one, &cfg), Err(Error::DegenerateCorpus(_))));
        let thin = synth_corpus(3, 1, 0.4, 8).unwrap();
        assert!(matches!(train_encoder(&thin, &cfg), Err(Error::DegenerateCorpus(_))));
    }
}
