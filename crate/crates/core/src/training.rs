//! Generator and remover objectives and the training protocols built on them.
//!
//! The generator maps clean speech `x` to `(n, m, δ, x')`; the remover maps
//! `x'` to `(n', m', δ', x̂)`. Objectives:
//!
//! * speaker `L_s = cos(v, v')` between embeddings of `x` and `x'`
//! * perceptual `L_p = γ‖x' - x‖ + (1 - γ)‖m‖`
//! * generator `L_G = η L_s + (1 - η) L_p`
//! * noise `L_noise = ‖n + n'‖`, mask `L_mask = ‖m - m'‖`
//! * removal `L_R = ω L_mask + (1 - ω) L_noise`
//! * joint `L = β L_G + (1 - β) L_R`
//!
//! Norms are Euclidean over one utterance; batch losses are means over items.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::audio::{Corpus, Waveform, SAMPLE_RATE};
use crate::encoder::{cosine_with_grad, DifferentiableEmbedder, EncoderModel, SpeakerEmbedding};
use crate::error::{Error, Result};
use crate::nn::{zeros_like, Adam, Module, Tensor3};
use crate::seed::stage_seed;
use crate::ssed::{SsedCache, SsedConfig, SsedNet};

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

/// `cos(v, v')`.
pub fn speaker_loss(v: &SpeakerEmbedding, v_prime: &SpeakerEmbedding) -> Result<f64> {
    cosine_with_grad(v.values(), v_prime.values()).map(|(c, _)| c)
}

/// `γ‖x' - x‖ + (1 - γ)‖m‖`.
pub fn perceptual_loss(x: &[f64], x_adv: &[f64], mask: &[f64], gamma: f64) -> Result<f64> {
    same_len(x, x_adv)?;
    same_len(x, mask)?;
    let diff: Vec<f64> = x_adv.iter().zip(x).map(|(a, b)| a - b).collect();
    Ok(gamma * l2(&diff) + (1.0 - gamma) * l2(mask))
}

/// `η L_s + (1 - η) L_p`.
pub fn generator_loss(l_speaker: f64, l_perceptual: f64, eta_w: f64) -> f64 {
    eta_w * l_speaker + (1.0 - eta_w) * l_perceptual
}

/// `‖n + n'‖`.
pub fn noise_loss(n: &[f64], n_prime: &[f64]) -> Result<f64> {
    same_len(n, n_prime)?;
    Ok(n.iter().zip(n_prime).map(|(a, b)| (a + b) * (a + b)).sum::<f64>().sqrt())
}

/// `‖m - m'‖`.
pub fn mask_loss(m: &[f64], m_prime: &[f64]) -> Result<f64> {
    same_len(m, m_prime)?;
    Ok(m.iter().zip(m_prime).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
}

/// `ω L_mask + (1 - ω) L_noise`.
pub fn removal_loss(l_mask: f64, l_noise: f64, omega: f64) -> f64 {
    omega * l_mask + (1.0 - omega) * l_noise
}

/// `β L_G + (1 - β) L_R`.
pub fn joint_loss(l_g: f64, l_r: f64, beta: f64) -> f64 {
    beta * l_g + (1.0 - beta) * l_r
}

/// Gradient of `‖v‖`, taken as zero at the origin.
fn norm_grad(v: &[f64], scale: f64) -> Vec<f64> {
    let n = l2(v);
    if n == 0.0 {
        vec![0.0; v.len()]
    } else {
        v.iter().map(|x| scale * x / n).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JointConfig {
    pub beta: f64,
    pub gamma: f64,
    /// Weight of the speaker term in the generator loss.
    pub eta_w: f64,
    pub omega: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub crop_seconds: f64,
    pub widths: [usize; 3],
    pub res_blocks: usize,
    /// SNR range in dB of the additive noise used for the noise-pair denoiser.
    pub noise_snr_db: [f64; 2],
    /// Batches used after training to re-estimate normalization statistics
    /// with the final weights.
    pub recalibration_batches: usize,
    pub seed: u64,
}

impl Default for JointConfig {
    fn default() -> Self {
        Self {
            beta: 0.94,
            gamma: 0.99,
            eta_w: 0.993,
            omega: 0.2,
            epsilon: 0.05,
            epochs: 6,
            batch_size: 8,
            learning_rate: 1e-3,
            crop_seconds: 0.5,
            widths: SsedConfig::default().widths,
            res_blocks: 6,
            noise_snr_db: [28.0, 36.0],
            recalibration_batches: 8,
            seed: 0,
        }
    }
}

impl JointConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("eta_w", self.eta_w),
            ("omega", self.omega),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        if self.batch_size == 0 || self.learning_rate <= 0.0 || self.crop_seconds <= 0.0 {
            return Err(Error::Config("batch size, learning rate and crop length must be positive".into()));
        }
        if !(self.noise_snr_db[0] <= self.noise_snr_db[1]) {
            return Err(Error::Config("noise SNR range must be ordered".into()));
        }
        Ok(())
    }

    /// Network configuration for the stage named `stage`.
    pub fn network(&self, stage: &str) -> SsedConfig {
        SsedConfig {
            widths: self.widths,
            res_blocks: self.res_blocks,
            epsilon: self.epsilon,
            seed: stage_seed(self.seed, stage),
        }
    }

    fn crop_len(&self) -> usize {
        (self.crop_seconds * SAMPLE_RATE as f64).round().max(1.0) as usize
    }
}

/// Per-epoch means of each loss component.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    pub total: Vec<f64>,
    pub speaker: Vec<f64>,
    pub perceptual: Vec<f64>,
    pub generator: Vec<f64>,
    pub noise: Vec<f64>,
    pub mask: Vec<f64>,
    pub removal: Vec<f64>,
}

impl LossHistory {
    fn push(&mut self, sums: &StepLosses, count: usize) {
        let k = count.max(1) as f64;
        self.total.push(sums.total / k);
        self.speaker.push(sums.speaker / k);
        self.perceptual.push(sums.perceptual / k);
        self.generator.push(sums.generator / k);
        self.noise.push(sums.noise / k);
        self.mask.push(sums.mask / k);
        self.removal.push(sums.removal / k);
    }

    /// CSV with one row per epoch.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,total,speaker,perceptual,generator,noise,mask,removal\n");
        for i in 0..self.total.len() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                i + 1,
                self.total[i],
                self.speaker[i],
                self.perceptual[i],
                self.generator[i],
                self.noise[i],
                self.mask[i],
                self.removal[i]
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Default)]
struct StepLosses {
    total: f64,
    speaker: f64,
    perceptual: f64,
    generator: f64,
    noise: f64,
    mask: f64,
    removal: f64,
}

impl StepLosses {
    fn add(&mut self, o: &StepLosses) {
        self.total += o.total;
        self.speaker += o.speaker;
        self.perceptual += o.perceptual;
        self.generator += o.generator;
        self.noise += o.noise;
        self.mask += o.mask;
        self.removal += o.removal;
    }
}

/// Generator and remover trained together, with their loss history.
#[derive(Debug, Clone)]
pub struct TrainedPair {
    pub generator: SsedNet,
    pub remover: SsedNet,
    pub generator_history: LossHistory,
    pub remover_history: LossHistory,
    pub config: JointConfig,
}

/// Where the `(x, n, m, x')` tuples seen by a remover come from.
enum Source<'a> {
    /// Trainable generator against a frozen encoder.
    Generator { encoder: &'a EncoderModel },
    /// Frozen generator evaluated with running statistics.
    Frozen(&'a SsedNet),
    /// Additive Gaussian noise, decomposed as `n = noise / ε`, `m = 1`.
    Noise { snr_db: [f64; 2] },
    /// Precomputed perturbed versions of the corpus utterances, decomposed as
    /// `n = (x' - x) / ε` clamped to `[-1, 1]`, `m = 1`.
    Pairs(&'a [Waveform]),
}

struct Batch {
    x: Tensor3,
    /// Embeddings of the clean crops, for the speaker loss.
    v: Vec<Vec<f64>>,
}

fn draw_batch(
    corpus: &Corpus,
    idx: &[usize],
    crop: usize,
    rng: &mut ChaCha8Rng,
    encoder: Option<&EncoderModel>,
    paired: Option<&[Waveform]>,
) -> Result<(Batch, Option<Tensor3>)> {
    let len = idx
        .iter()
        .map(|&i| corpus.utterances()[i].len())
        .min()
        .unwrap_or(0)
        .min(crop);
    let mut x = Tensor3::zeros(idx.len(), 1, len);
    let mut xp = paired.map(|_| Tensor3::zeros(idx.len(), 1, len));
    for (b, &i) in idx.iter().enumerate() {
        let s = corpus.utterances()[i].samples();
        let start = rng.gen_range(0..=s.len() - len);
        x.item_mut(b).copy_from_slice(&s[start..start + len]);
        if let (Some(p), Some(t)) = (paired, xp.as_mut()) {
            t.item_mut(b).copy_from_slice(&p[i].samples()[start..start + len]);
        }
    }
    let v = match encoder {
        Some(e) => (0..idx.len())
            .map(|b| e.embed_samples(x.item(b)))
            .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    Ok((Batch { x, v }, xp))
}

/// Perturbed batch plus the targets `n`, `m` the remover is trained against.
struct Perturbed {
    x_adv: Tensor3,
    n: Tensor3,
    m: Tensor3,
    gen_cache: Option<SsedCache>,
}

fn perturb(
    source: &Source<'_>,
    generator: Option<&SsedNet>,
    batch: &Batch,
    paired: Option<Tensor3>,
    eps: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Perturbed> {
    match source {
        Source::Generator { .. } => {
            let g = generator.expect("generator source needs a generator");
            let (o, cache) = g.forward(&batch.x, true)?;
            Ok(Perturbed {
                x_adv: o.output,
                n: o.noise,
                m: o.mask,
                gen_cache: Some(cache),
            })
        }
        Source::Frozen(g) => {
            let (o, _) = g.forward(&batch.x, false)?;
            Ok(Perturbed {
                x_adv: o.output,
                n: o.noise,
                m: o.mask,
                gen_cache: None,
            })
        }
        Source::Noise { snr_db } => {
            let x = &batch.x;
            let mut n = Tensor3::zeros(x.b, 1, x.l);
            let mut x_adv = Tensor3::zeros(x.b, 1, x.l);
            for b in 0..x.b {
                let item = x.item(b);
                let p = item.iter().map(|v| v * v).sum::<f64>() / item.len() as f64;
                let snr = rng.gen_range(snr_db[0]..=snr_db[1]);
                let raw: Vec<f64> = (0..item.len()).map(|_| StandardNormal.sample(rng)).collect();
                let pr = raw.iter().map(|v| v * v).sum::<f64>() / raw.len() as f64;
                let scale = if p > 0.0 && pr > 0.0 {
                    (p / (pr * 10f64.powf(snr / 10.0))).sqrt()
                } else {
                    0.0
                };
                for (t, (o, r)) in item.iter().zip(&raw).enumerate() {
                    let nv = (scale * r / eps).clamp(-1.0, 1.0);
                    n.item_mut(b)[t] = nv;
                    x_adv.item_mut(b)[t] = (o + eps * nv).clamp(-1.0, 1.0);
                }
            }
            let m = Tensor3::from_vec(x.b, 1, x.l, vec![1.0; x.data.len()]);
            Ok(Perturbed {
                x_adv,
                n,
                m,
                gen_cache: None,
            })
        }
        Source::Pairs(_) => {
            let x_adv = paired.expect("paired source draws aligned crops");
            let n = Tensor3::from_vec(
                x_adv.b,
                1,
                x_adv.l,
                x_adv
                    .data
                    .iter()
                    .zip(&batch.x.data)
                    .map(|(a, o)| ((a - o) / eps).clamp(-1.0, 1.0))
                    .collect(),
            );
            let m = Tensor3::from_vec(x_adv.b, 1, x_adv.l, vec![1.0; x_adv.data.len()]);
            Ok(Perturbed {
                x_adv,
                n,
                m,
                gen_cache: None,
            })
        }
    }
}

/// One optimization run. `generator` is trained only for the
/// [`Source::Generator`] source; `remover` is trained when present.
struct Run<'a> {
    corpus: &'a Corpus,
    cfg: &'a JointConfig,
    source: Source<'a>,
    beta: f64,
    stage: &'static str,
}

impl Run<'_> {
    fn train(
        &self,
        mut generator: Option<SsedNet>,
        mut remover: Option<SsedNet>,
    ) -> Result<(Option<SsedNet>, Option<SsedNet>, LossHistory)> {
        let cfg = self.cfg;
        cfg.validate()?;
        if self.corpus.is_empty() {
            return Err(Error::DegenerateCorpus("training corpus is empty".into()));
        }
        let trains_generator = matches!(self.source, Source::Generator { .. });
        let encoder = match self.source {
            Source::Generator { encoder } => Some(encoder),
            _ => None,
        };
        let paired = match self.source {
            Source::Pairs(p) => {
                if p.len() != self.corpus.len() {
                    return Err(Error::LengthMismatch {
                        left: p.len(),
                        right: self.corpus.len(),
                    });
                }
                for (a, o) in p.iter().zip(self.corpus.utterances()) {
                    same_len(a.samples(), o.samples())?;
                }
                Some(p)
            }
            _ => None,
        };
        let crop = cfg.crop_len();
        let mut rng = ChaCha8Rng::seed_from_u64(stage_seed(cfg.seed, self.stage));
        let mut opt = Adam::new(cfg.learning_rate);
        let mut history = LossHistory::default();
        let mut order: Vec<usize> = (0..self.corpus.len()).collect();

        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let mut sums = StepLosses::default();
            let mut items = 0;
            for (bi, idx) in order.chunks(cfg.batch_size).enumerate() {
                let (batch, xp) = draw_batch(self.corpus, idx, crop, &mut rng, encoder, paired)?;
                let diverged = |e: Error| match e {
                    Error::NonFinite(what) => Error::Diverged {
                        epoch,
                        batch: bi,
                        detail: format!("{} produced a non-finite {what}", self.stage),
                    },
                    other => other,
                };
                let pert = perturb(&self.source, generator.as_ref(), &batch, xp, cfg.epsilon, &mut rng)
                    .map_err(diverged)?;
                let (losses, g_grad, r_grad) = self
                    .step(generator.as_ref(), remover.as_ref(), &batch, &pert, trains_generator)
                    .map_err(diverged)?;
                if !losses.total.is_finite() {
                    return Err(Error::Diverged {
                        epoch,
                        batch: bi,
                        detail: format!("{} loss is not finite", self.stage),
                    });
                }
                let mut params: Vec<&mut [f64]> = Vec::new();
                let mut grads: Vec<&[f64]> = Vec::new();
                if let (Some(g), Some(gg)) = (generator.as_mut(), g_grad.as_ref()) {
                    if trains_generator {
                        params.extend(g.params_mut());
                        grads.extend(gg.params());
                    }
                }
                if let (Some(r), Some(rg)) = (remover.as_mut(), r_grad.as_ref()) {
                    params.extend(r.params_mut());
                    grads.extend(rg.params());
                }
                opt.step(params, grads);
                if trains_generator {
                    if let (Some(g), Some(c)) = (generator.as_mut(), pert.gen_cache.as_ref()) {
                        g.update_running(c);
                    }
                }
                sums.add(&losses);
                items += idx.len();
            }
            history.push(&sums, items);
        }
        // Remover running statistics come only from this pass.
        self.recalibrate(generator.as_mut(), remover.as_mut(), trains_generator, paired, &mut rng)?;
        Ok((generator, remover, history))
    }

    /// Re-estimates normalization statistics with the final weights as a
    /// cumulative average over a few training batches, the generator first
    /// so the remover sees the generator's evaluation-mode output.
    fn recalibrate(
        &self,
        mut generator: Option<&mut SsedNet>,
        remover: Option<&mut SsedNet>,
        trains_generator: bool,
        paired: Option<&[Waveform]>,
        rng: &mut ChaCha8Rng,
    ) -> Result<()> {
        let n = self.cfg.recalibration_batches;
        if n == 0 {
            return Ok(());
        }
        let crop = self.cfg.crop_len();
        let mut order: Vec<usize> = (0..self.corpus.len()).collect();
        let draw = |rng: &mut ChaCha8Rng, order: &mut Vec<usize>| {
            order.shuffle(rng);
            let idx: Vec<usize> = order.iter().take(self.cfg.batch_size).copied().collect();
            draw_batch(self.corpus, &idx, crop, rng, None, paired)
        };
        if trains_generator {
            if let Some(g) = generator.as_deref_mut() {
                for k in 0..n {
                    g.set_bn_momentum(1.0 / (k + 1) as f64);
                    let (batch, _) = draw(rng, &mut order)?;
                    let (_, cache) = g.forward(&batch.x, true)?;
                    g.update_running(&cache);
                }
                g.set_bn_momentum(0.1);
            }
        }
        if let Some(r) = remover {
            for k in 0..n {
                r.set_bn_momentum(1.0 / (k + 1) as f64);
                let (batch, xp) = draw(rng, &mut order)?;
                let src = match &self.source {
                    Source::Generator { .. } => Source::Frozen(generator.as_deref().expect("generator present")),
                    Source::Frozen(g) => Source::Frozen(g),
                    Source::Noise { snr_db } => Source::Noise { snr_db: *snr_db },
                    Source::Pairs(p) => Source::Pairs(p),
                };
                let pert = perturb(&src, None, &batch, xp, self.cfg.epsilon, rng)?;
                let (_, cache) = r.forward(&pert.x_adv, true)?;
                r.update_running(&cache);
            }
            r.set_bn_momentum(0.1);
        }
        Ok(())
    }

    /// Loss values and parameter gradients for one batch.
    fn step(
        &self,
        generator: Option<&SsedNet>,
        remover: Option<&SsedNet>,
        batch: &Batch,
        pert: &Perturbed,
        trains_generator: bool,
    ) -> Result<(StepLosses, Option<SsedNet>, Option<SsedNet>)> {
        let cfg = self.cfg;
        let beta = self.beta;
        let bsz = batch.x.b;
        let inv = 1.0 / bsz as f64;
        let (b, l) = (bsz, batch.x.l);
        let mut out = StepLosses::default();

        // Remover side.
        let mut r_grad = None;
        let mut d_xadv = Tensor3::zeros(b, 1, l);
        let mut dn = Tensor3::zeros(b, 1, l);
        let mut dm = Tensor3::zeros(b, 1, l);
        if let Some(r) = remover {
            let (ro, rc) = r.forward(&pert.x_adv, true)?;
            let mut dn_r = Tensor3::zeros(b, 1, l);
            let mut dm_r = Tensor3::zeros(b, 1, l);
            let wr = (1.0 - beta) * inv;
            for bi in 0..b {
                let n = pert.n.item(bi);
                let m = pert.m.item(bi);
                let n2 = ro.noise.item(bi);
                let m2 = ro.mask.item(bi);
                let sum: Vec<f64> = n.iter().zip(n2).map(|(a, c)| a + c).collect();
                let diff: Vec<f64> = m.iter().zip(m2).map(|(a, c)| a - c).collect();
                let ln = l2(&sum);
                let lm = l2(&diff);
                out.noise += ln;
                out.mask += lm;
                out.removal += removal_loss(lm, ln, cfg.omega);
                let gn = norm_grad(&sum, wr * (1.0 - cfg.omega));
                let gm = norm_grad(&diff, wr * cfg.omega);
                dn_r.item_mut(bi).copy_from_slice(&gn);
                for (d, g) in dm_r.item_mut(bi).iter_mut().zip(&gm) {
                    *d = -g;
                }
                if trains_generator {
                    dn.item_mut(bi).copy_from_slice(&gn);
                    dm.item_mut(bi).copy_from_slice(&gm);
                }
            }
            let mut grad = zeros_like(r);
            if let Some(dx) = r.backward(&rc, Some(&dn_r), Some(&dm_r), None, Some(&mut grad), trains_generator) {
                d_xadv = dx;
            }
            r_grad = Some(grad);
        }

        // Generator side.
        let mut g_grad = None;
        if let (true, Some(g), Source::Generator { encoder }) = (trains_generator, generator, &self.source) {
            let wg = beta * inv;
            for bi in 0..b {
                let x = batch.x.item(bi);
                let xa = pert.x_adv.item(bi);
                let m = pert.m.item(bi);
                let (emb, pullback) = encoder.embed_with_pullback(xa)?;
                let (cos, dcos) = cosine_with_grad(&batch.v[bi], &emb)?;
                let d_in = pullback(&dcos);
                let diff: Vec<f64> = xa.iter().zip(x).map(|(a, o)| a - o).collect();
                let ld = l2(&diff);
                let lmask = l2(m);
                let lp = cfg.gamma * ld + (1.0 - cfg.gamma) * lmask;
                out.speaker += cos;
                out.perceptual += lp;
                out.generator += generator_loss(cos, lp, cfg.eta_w);
                let gd = norm_grad(&diff, wg * (1.0 - cfg.eta_w) * cfg.gamma);
                let gmk = norm_grad(m, wg * (1.0 - cfg.eta_w) * (1.0 - cfg.gamma));
                let row = d_xadv.item_mut(bi);
                for ((r, s), d) in row.iter_mut().zip(&d_in).zip(&gd) {
                    *r += wg * cfg.eta_w * s + d;
                }
                for (d, gm) in dm.item_mut(bi).iter_mut().zip(&gmk) {
                    *d += gm;
                }
            }
            let mut grad = zeros_like(g);
            let cache = pert.gen_cache.as_ref().expect("training-mode generator cache");
            g.backward(cache, Some(&dn), Some(&dm), Some(&d_xadv), Some(&mut grad), false);
            g_grad = Some(grad);
        }

        let k = bsz as f64;
        let lg = out.generator / k;
        let lr = out.removal / k;
        out.total = joint_loss(lg, lr, beta) * k;
        Ok((out, g_grad, r_grad))
    }
}

/// Joint training of a generator and a remover against a frozen encoder.
pub fn train_joint(corpus: &Corpus, encoder: &EncoderModel, cfg: &JointConfig) -> Result<TrainedPair> {
    cfg.validate()?;
    let run = Run {
        corpus,
        cfg,
        source: Source::Generator { encoder },
        beta: cfg.beta,
        stage: "joint",
    };
    let generator = SsedNet::new(cfg.network("joint-generator"))?;
    let remover = SsedNet::new(cfg.network("joint-remover"))?;
    let (generator, remover, history) = run.train(Some(generator), Some(remover))?;
    Ok(TrainedPair {
        generator: generator.expect("trained"),
        remover: remover.expect("trained"),
        generator_history: history.clone(),
        remover_history: history,
        config: cfg.clone(),
    })
}

/// Generator trained alone on `L_G`.
pub fn train_generator(corpus: &Corpus, encoder: &EncoderModel, cfg: &JointConfig) -> Result<(SsedNet, LossHistory)> {
    cfg.validate()?;
    let run = Run {
        corpus,
        cfg,
        source: Source::Generator { encoder },
        beta: 1.0,
        stage: "generator",
    };
    let generator = SsedNet::new(cfg.network("independent-generator"))?;
    let (generator, _, history) = run.train(Some(generator), None)?;
    Ok((generator.expect("trained"), history))
}

/// Remover trained on `L_R` against a frozen generator (the semi-informed
/// Denoising-G). The joint weight β is forced to zero.
pub fn train_denoiser_g(
    corpus: &Corpus,
    frozen_generator: &SsedNet,
    cfg: &JointConfig,
) -> Result<(SsedNet, LossHistory)> {
    remover_run(corpus, Source::Frozen(frozen_generator), cfg, "denoiser-g")
}

/// Remover trained on clean/noisy pairs with additive Gaussian noise at an
/// SNR drawn from `cfg.noise_snr_db`; it never sees adversarial speech.
pub fn train_noise_denoiser(corpus: &Corpus, cfg: &JointConfig) -> Result<(SsedNet, LossHistory)> {
    remover_run(
        corpus,
        Source::Noise {
            snr_db: cfg.noise_snr_db,
        },
        cfg,
        "noise-denoiser",
    )
}

/// Remover trained on `(corpus[i], perturbed[i])` pairs, for perturbations
/// that come without a noise/mask decomposition.
pub fn train_pair_denoiser(
    corpus: &Corpus,
    perturbed: &[Waveform],
    cfg: &JointConfig,
) -> Result<(SsedNet, LossHistory)> {
    remover_run(corpus, Source::Pairs(perturbed), cfg, "pair-denoiser")
}

fn remover_run(
    corpus: &Corpus,
    source: Source<'_>,
    cfg: &JointConfig,
    stage: &'static str,
) -> Result<(SsedNet, LossHistory)> {
    cfg.validate()?;
    let run = Run {
        corpus,
        cfg,
        source,
        beta: 0.0,
        stage,
    };
    let remover = SsedNet::new(cfg.network(stage))?;
    let (_, remover, history) = run.train(None, Some(remover))?;
    Ok((remover.expect("trained"), history))
}

/// Generator trained alone, then a fresh remover trained against it.
pub fn train_independent(corpus: &Corpus, encoder: &EncoderModel, cfg: &JointConfig) -> Result<TrainedPair> {
    let (generator, generator_history) = train_generator(corpus, encoder, cfg)?;
    let (remover, remover_history) = remover_run(corpus, Source::Frozen(&generator), cfg, "independent-remover")?;
    Ok(TrainedPair {
        generator,
        remover,
        generator_history,
        remover_history,
        config: cfg.clone(),
    })
}
