//! Saliency-style encoder-decoder that emits a bounded additive perturbation
//! `ε · (noise ⊙ mask)`.
//!
//! The same network serves as generator (applied to clean speech) and as
//! remover (applied to perturbed speech); only the training objective differs.
//! The encoder downsamples by four, so inputs are zero-padded symmetrically
//! to a multiple of four and the outputs trimmed back.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::error::{Error, Result};
use crate::nn::{
    relu, relu_backward, sigmoid, sigmoid_backward, tanh, tanh_backward, BatchNorm1d, BnCache,
    Conv1d, ConvCache, ConvTranspose1d, ConvTransposeCache, Module, Tensor3,
};

const DOWNSAMPLE: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SsedConfig {
    /// Channel widths of the three encoder blocks; the residual blocks run at
    /// the last width and the decoders mirror them.
    pub widths: [usize; 3],
    pub res_blocks: usize,
    /// Perturbation intensity.
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for SsedConfig {
    fn default() -> Self {
        Self {
            widths: [8, 16, 32],
            res_blocks: 6,
            epsilon: 0.05,
            seed: 0,
        }
    }
}

impl SsedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.widths.iter().any(|&w| w == 0) {
            return Err(Error::Config("SSED widths must be positive".into()));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config("SSED epsilon must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ConvBlock {
    conv: Conv1d,
    bn: BatchNorm1d,
}

struct ConvBlockCache {
    conv: ConvCache,
    bn: BnCache,
    out: Tensor3,
}

impl ConvBlock {
    fn forward(&self, x: &Tensor3, train: bool) -> (Tensor3, ConvBlockCache) {
        let (h, conv) = self.conv.forward(x);
        let (mut out, bn) = self.bn.forward(&h, train);
        relu(&mut out.data);
        let cache = ConvBlockCache {
            conv,
            bn,
            out: out.clone(),
        };
        (out, cache)
    }

    fn backward(
        &self,
        cache: &ConvBlockCache,
        mut g: Tensor3,
        grad: Option<&mut ConvBlock>,
        input_grad: bool,
    ) -> Option<Tensor3> {
        relu_backward(&cache.out.data, &mut g.data);
        let (gc, gb) = match grad {
            Some(b) => (Some(&mut b.conv), Some(&mut b.bn)),
            None => (None, None),
        };
        let g = self.bn.backward(&cache.bn, &g, gb);
        self.conv.backward(&cache.conv, &g, gc, input_grad)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ResBlock {
    conv1: Conv1d,
    bn1: BatchNorm1d,
    conv2: Conv1d,
    bn2: BatchNorm1d,
}

struct ResCache {
    c1: ConvCache,
    b1: BnCache,
    h: Tensor3,
    c2: ConvCache,
    b2: BnCache,
    out: Tensor3,
}

impl ResBlock {
    fn forward(&self, x: &Tensor3, train: bool) -> (Tensor3, ResCache) {
        let (a, c1) = self.conv1.forward(x);
        let (mut h, b1) = self.bn1.forward(&a, train);
        relu(&mut h.data);
        let (a2, c2) = self.conv2.forward(&h);
        let (mut out, b2) = self.bn2.forward(&a2, train);
        out.add_assign(x);
        relu(&mut out.data);
        let cache = ResCache {
            c1,
            b1,
            h,
            c2,
            b2,
            out: out.clone(),
        };
        (out, cache)
    }

    fn backward(&self, cache: &ResCache, mut g: Tensor3, grad: Option<&mut ResBlock>) -> Tensor3 {
        relu_backward(&cache.out.data, &mut g.data);
        let (gc1, gb1, gc2, gb2) = match grad {
            Some(r) => (Some(&mut r.conv1), Some(&mut r.bn1), Some(&mut r.conv2), Some(&mut r.bn2)),
            None => (None, None, None, None),
        };
        let t = self.bn2.backward(&cache.b2, &g, gb2);
        let mut t = self.conv2.backward(&cache.c2, &t, gc2, true).expect("input gradient");
        relu_backward(&cache.h.data, &mut t.data);
        let t = self.bn1.backward(&cache.b1, &t, gb1);
        let mut gx = self.conv1.backward(&cache.c1, &t, gc1, true).expect("input gradient");
        gx.add_assign(&g);
        gx
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Activation {
    Tanh,
    Sigmoid,
}

impl Activation {
    fn apply(self, x: &mut [f64]) {
        match self {
            Activation::Tanh => tanh(x),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    fn backward(self, y: &[f64], g: &mut [f64]) {
        match self {
            Activation::Tanh => tanh_backward(y, g),
            Activation::Sigmoid => sigmoid_backward(y, g),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct DecBlock {
    tconv: ConvTranspose1d,
    bn: Option<BatchNorm1d>,
    act: Activation,
}

struct DecCache {
    tconv: ConvTransposeCache,
    bn: Option<BnCache>,
    out: Tensor3,
}

impl DecBlock {
    fn forward(&self, x: &Tensor3, train: bool) -> (Tensor3, DecCache) {
        let (h, tconv) = self.tconv.forward(x);
        let (mut out, bn) = match &self.bn {
            Some(bn) => {
                let (o, c) = bn.forward(&h, train);
                (o, Some(c))
            }
            None => (h, None),
        };
        self.act.apply(&mut out.data);
        let cache = DecCache {
            tconv,
            bn,
            out: out.clone(),
        };
        (out, cache)
    }

    fn backward(&self, cache: &DecCache, mut g: Tensor3, grad: Option<&mut DecBlock>) -> Tensor3 {
        self.act.backward(&cache.out.data, &mut g.data);
        let (gt, gb) = match grad {
            Some(d) => (Some(&mut d.tconv), d.bn.as_mut()),
            None => (None, None),
        };
        if let (Some(bn), Some(bc)) = (&self.bn, &cache.bn) {
            g = bn.backward(bc, &g, gb);
        }
        self.tconv.backward(&cache.tconv, &g, gt, true).expect("input gradient")
    }
}

/// Encoder, residual stack, noise decoder and mask decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct SsedNet {
    pub config: SsedConfig,
    encoder: Vec<ConvBlock>,
    residual: Vec<ResBlock>,
    noise_decoder: Vec<DecBlock>,
    mask_decoder: Vec<DecBlock>,
}

/// Per-item outputs of a forward pass, each of the input's length.
#[derive(Debug, Clone, PartialEq)]
pub struct SsedOutput {
    pub noise: Tensor3,
    pub mask: Tensor3,
    pub delta: Tensor3,
    /// `clamp(x + delta, -1, 1)`.
    pub output: Tensor3,
}

pub struct SsedCache {
    len: usize,
    pad_left: usize,
    encoder: Vec<ConvBlockCache>,
    residual: Vec<ResCache>,
    noise: Vec<DecCache>,
    mask: Vec<DecCache>,
    /// Trimmed noise and mask, needed for the product rule.
    n: Tensor3,
    m: Tensor3,
    /// Whether `x + delta` was inside `[-1, 1]` at each position.
    inside: Vec<bool>,
    train: bool,
}

impl SsedNet {
    pub fn new(config: SsedConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let [c1, c2, c3] = config.widths;
        let block = |cin, cout, k, s, p, rng: &mut ChaCha8Rng| ConvBlock {
            conv: Conv1d::new(cin, cout, k, s, p, rng),
            bn: BatchNorm1d::new(cout),
        };
        let encoder = vec![
            block(1, c1, 7, 1, 3, &mut rng),
            block(c1, c2, 3, 2, 1, &mut rng),
            block(c2, c3, 3, 2, 1, &mut rng),
        ];
        let residual = (0..config.res_blocks)
            .map(|_| ResBlock {
                conv1: Conv1d::new(c3, c3, 3, 1, 1, &mut rng),
                bn1: BatchNorm1d::new(c3),
                conv2: Conv1d::new(c3, c3, 3, 1, 1, &mut rng),
                bn2: BatchNorm1d::new(c3),
            })
            .collect();
        let decoder = |out_act, rng: &mut ChaCha8Rng| {
            vec![
                DecBlock {
                    tconv: ConvTranspose1d::new(c3, c2, 3, 2, 1, 1, rng),
                    bn: Some(BatchNorm1d::new(c2)),
                    act: Activation::Tanh,
                },
                DecBlock {
                    tconv: ConvTranspose1d::new(c2, c1, 3, 2, 1, 1, rng),
                    bn: Some(BatchNorm1d::new(c1)),
                    act: Activation::Tanh,
                },
                DecBlock {
                    tconv: ConvTranspose1d::new(c1, 1, 7, 1, 3, 0, rng),
                    bn: None,
                    act: out_act,
                },
            ]
        };
        let noise_decoder = decoder(Activation::Tanh, &mut rng);
        let mask_decoder = decoder(Activation::Sigmoid, &mut rng);
        Ok(Self {
            config,
            encoder,
            residual,
            noise_decoder,
            mask_decoder,
        })
    }

    /// The same architecture with every trainable parameter set to zero.
    pub fn zeroed(config: SsedConfig) -> Result<Self> {
        let mut net = Self::new(config)?;
        for p in net.params_mut() {
            p.fill(0.0);
        }
        Ok(net)
    }

    pub fn epsilon(&self) -> f64 {
        self.config.epsilon
    }

    /// Forward pass over a `[batch, 1, len]` tensor.
    ///
    /// `train` selects batch statistics in the normalization layers; their
    /// running averages are only folded in by [`SsedNet::update_running`].
    pub fn forward(&self, x: &Tensor3, train: bool) -> Result<(SsedOutput, SsedCache)> {
        if x.c != 1 || x.l == 0 || x.b == 0 {
            return Err(Error::InvalidInput("SSED input must be [batch, 1, len] with len > 0".into()));
        }
        let len = x.l;
        let pad = (DOWNSAMPLE - len % DOWNSAMPLE) % DOWNSAMPLE;
        let pad_left = pad / 2;
        let padded_len = len + pad;
        let mut h = Tensor3::zeros(x.b, 1, padded_len);
        for b in 0..x.b {
            h.item_mut(b)[pad_left..pad_left + len].copy_from_slice(x.item(b));
        }

        let mut encoder = Vec::with_capacity(self.encoder.len());
        for blk in &self.encoder {
            let (o, c) = blk.forward(&h, train);
            encoder.push(c);
            h = o;
        }
        let mut residual = Vec::with_capacity(self.residual.len());
        for blk in &self.residual {
            let (o, c) = blk.forward(&h, train);
            residual.push(c);
            h = o;
        }
        let run = |dec: &[DecBlock]| {
            let mut caches = Vec::with_capacity(dec.len());
            let mut t = h.clone();
            for blk in dec {
                let (o, c) = blk.forward(&t, train);
                caches.push(c);
                t = o;
            }
            (t, caches)
        };
        let (n_full, noise) = run(&self.noise_decoder);
        let (m_full, mask) = run(&self.mask_decoder);
        debug_assert_eq!(n_full.l, padded_len);

        let trim = |t: &Tensor3| {
            let mut out = Tensor3::zeros(x.b, 1, len);
            for b in 0..x.b {
                out.item_mut(b).copy_from_slice(&t.item(b)[pad_left..pad_left + len]);
            }
            out
        };
        let n = trim(&n_full);
        let m = trim(&m_full);
        let eps = self.config.epsilon;
        let mut delta = Tensor3::zeros(x.b, 1, len);
        let mut output = Tensor3::zeros(x.b, 1, len);
        let mut inside = vec![true; x.data.len()];
        for i in 0..x.data.len() {
            let d = eps * n.data[i] * m.data[i];
            let s = x.data[i] + d;
            delta.data[i] = d;
            inside[i] = (-1.0..=1.0).contains(&s);
            output.data[i] = s.clamp(-1.0, 1.0);
        }
        if !output.is_finite() || !delta.is_finite() {
            return Err(Error::NonFinite("SSED activation".into()));
        }
        Ok((
            SsedOutput {
                noise: n.clone(),
                mask: m.clone(),
                delta,
                output,
            },
            SsedCache {
                len,
                pad_left,
                encoder,
                residual,
                noise,
                mask,
                n,
                m,
                inside,
                train,
            },
        ))
    }

    /// Backpropagates gradients with respect to the noise, mask and clamped
    /// output (any of them may be absent). Parameter gradients accumulate
    /// into `grad`; the input gradient is returned when requested.
    pub fn backward(
        &self,
        cache: &SsedCache,
        d_noise: Option<&Tensor3>,
        d_mask: Option<&Tensor3>,
        d_output: Option<&Tensor3>,
        grad: Option<&mut SsedNet>,
        input_grad: bool,
    ) -> Option<Tensor3> {
        let (b, len) = (cache.n.b, cache.len);
        let eps = self.config.epsilon;
        let mut dn = d_noise.cloned().unwrap_or_else(|| Tensor3::zeros(b, 1, len));
        let mut dm = d_mask.cloned().unwrap_or_else(|| Tensor3::zeros(b, 1, len));
        let mut dx_direct = Tensor3::zeros(b, 1, len);
        if let Some(dout) = d_output {
            for i in 0..dout.data.len() {
                if cache.inside[i] {
                    let g = dout.data[i];
                    dx_direct.data[i] = g;
                    dn.data[i] += g * eps * cache.m.data[i];
                    dm.data[i] += g * eps * cache.n.data[i];
                }
            }
        }
        let padded_len = cache.noise.last().expect("decoder has layers").out.l;
        let pad = |t: &Tensor3| {
            let mut out = Tensor3::zeros(b, 1, padded_len);
            for bi in 0..b {
                out.item_mut(bi)[cache.pad_left..cache.pad_left + len].copy_from_slice(t.item(bi));
            }
            out
        };

        let (mut g_enc, mut g_res, mut g_noise, mut g_mask) = match grad {
            Some(g) => (
                Some(&mut g.encoder),
                Some(&mut g.residual),
                Some(&mut g.noise_decoder),
                Some(&mut g.mask_decoder),
            ),
            None => (None, None, None, None),
        };
        let run_back = |dec: &[DecBlock], caches: &[DecCache], g: Tensor3, store: Option<&mut Vec<DecBlock>>| {
            let mut g = g;
            let mut store = store;
            for (i, blk) in dec.iter().enumerate().rev() {
                let slot = store.as_deref_mut().map(|s| &mut s[i]);
                g = blk.backward(&caches[i], g, slot);
            }
            g
        };
        let mut dz = run_back(&self.noise_decoder, &cache.noise, pad(&dn), g_noise.take());
        dz.add_assign(&run_back(&self.mask_decoder, &cache.mask, pad(&dm), g_mask.take()));

        for (i, blk) in self.residual.iter().enumerate().rev() {
            let slot = g_res.as_deref_mut().map(|s| &mut s[i]);
            dz = blk.backward(&cache.residual[i], dz, slot);
        }
        for (i, blk) in self.encoder.iter().enumerate().rev() {
            let slot = g_enc.as_deref_mut().map(|s| &mut s[i]);
            let need = i > 0 || input_grad;
            match blk.backward(&cache.encoder[i], dz.clone(), slot, need) {
                Some(g) => dz = g,
                None => return None,
            }
        }
        let mut dx = Tensor3::zeros(b, 1, len);
        for bi in 0..b {
            dx.item_mut(bi)
                .copy_from_slice(&dz.item(bi)[cache.pad_left..cache.pad_left + len]);
        }
        dx.add_assign(&dx_direct);
        Some(dx)
    }

    /// Folds the batch statistics of a training-mode pass into the running
    /// averages of every normalization layer.
    pub fn update_running(&mut self, cache: &SsedCache) {
        if !cache.train {
            return;
        }
        for (blk, c) in self.encoder.iter_mut().zip(&cache.encoder) {
            blk.bn.update_running(&c.bn);
        }
        for (blk, c) in self.residual.iter_mut().zip(&cache.residual) {
            blk.bn1.update_running(&c.b1);
            blk.bn2.update_running(&c.b2);
        }
        for (dec, caches) in [
            (&mut self.noise_decoder, &cache.noise),
            (&mut self.mask_decoder, &cache.mask),
        ] {
            for (blk, c) in dec.iter_mut().zip(caches) {
                if let (Some(bn), Some(bc)) = (blk.bn.as_mut(), c.bn.as_ref()) {
                    bn.update_running(bc);
                }
            }
        }
    }

    fn bn_layers_mut(&mut self) -> Vec<&mut BatchNorm1d> {
        let mut out: Vec<&mut BatchNorm1d> = Vec::new();
        for b in &mut self.encoder {
            out.push(&mut b.bn);
        }
        for r in &mut self.residual {
            out.push(&mut r.bn1);
            out.push(&mut r.bn2);
        }
        for d in self.noise_decoder.iter_mut().chain(self.mask_decoder.iter_mut()) {
            if let Some(bn) = d.bn.as_mut() {
                out.push(bn);
            }
        }
        out
    }

    /// Overrides the running-average momentum of every normalization layer.
    pub fn set_bn_momentum(&mut self, momentum: f64) {
        for bn in self.bn_layers_mut() {
            bn.momentum = momentum;
        }
    }
}

impl Module for SsedNet {
    fn params(&self) -> Vec<&[f64]> {
        let mut p = Vec::new();
        for b in &self.encoder {
            p.extend(b.conv.params());
            p.extend(b.bn.params());
        }
        for r in &self.residual {
            p.extend(r.conv1.params());
            p.extend(r.bn1.params());
            p.extend(r.conv2.params());
            p.extend(r.bn2.params());
        }
        for d in self.noise_decoder.iter().chain(&self.mask_decoder) {
            p.extend(d.tconv.params());
            if let Some(bn) = &d.bn {
                p.extend(bn.params());
            }
        }
        p
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p = Vec::new();
        for b in &mut self.encoder {
            p.extend(b.conv.params_mut());
            p.extend(b.bn.params_mut());
        }
        for r in &mut self.residual {
            p.extend(r.conv1.params_mut());
            p.extend(r.bn1.params_mut());
            p.extend(r.conv2.params_mut());
            p.extend(r.bn2.params_mut());
        }
        for d in self.noise_decoder.iter_mut().chain(self.mask_decoder.iter_mut()) {
            p.extend(d.tconv.params_mut());
            if let Some(bn) = &mut d.bn {
                p.extend(bn.params_mut());
            }
        }
        p
    }

    fn buffers(&self) -> Vec<&[f64]> {
        let mut p = Vec::new();
        for b in &self.encoder {
            p.extend(b.bn.buffers());
        }
        for r in &self.residual {
            p.extend(r.bn1.buffers());
            p.extend(r.bn2.buffers());
        }
        for d in self.noise_decoder.iter().chain(&self.mask_decoder) {
            if let Some(bn) = &d.bn {
                p.extend(bn.buffers());
            }
        }
        p
    }

    fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p = Vec::new();
        for b in &mut self.encoder {
            p.extend(b.bn.buffers_mut());
        }
        for r in &mut self.residual {
            p.extend(r.bn1.buffers_mut());
            p.extend(r.bn2.buffers_mut());
        }
        for d in self.noise_decoder.iter_mut().chain(self.mask_decoder.iter_mut()) {
            if let Some(bn) = &mut d.bn {
                p.extend(bn.buffers_mut());
            }
        }
        p
    }
}

/// Sample-domain result of running an [`SsedNet`] on one waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct SsedForward {
    pub noise: Vec<f64>,
    pub mask: Vec<f64>,
    pub delta: Vec<f64>,
    pub output: Waveform,
}

fn single(net: &SsedNet, w: &Waveform) -> Result<SsedForward> {
    let x = Tensor3::from_signals(&[w.samples()]);
    let (out, _) = net.forward(&x, false)?;
    Ok(SsedForward {
        noise: out.noise.data,
        mask: out.mask.data,
        delta: out.delta.data,
        output: w.derive(out.output.data)?,
    })
}

/// `(n, m, δ, x')` for a clean waveform, using running normalization
/// statistics.
pub fn generator_forward(net: &SsedNet, x: &Waveform) -> Result<SsedForward> {
    single(net, x)
}

/// `(n', m', δ', x̂)` for a perturbed waveform.
pub fn remover_forward(net: &SsedNet, x_adv: &Waveform) -> Result<SsedForward> {
    single(net, x_adv)
}
