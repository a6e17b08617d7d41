//! MI-FGSM: iterative signed-gradient attack with L1-normalized momentum and
//! an L∞ projection, driven by the negative cosine between the embedding of
//! the original utterance and that of the current iterate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::encoder::{cosine_with_grad, input_gradient, DifferentiableEmbedder, SpeakerEmbedding};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MifgsmConfig {
    /// L∞ bound on the perturbation, in amplitude units.
    pub epsilon: f64,
    /// Per-iteration step; must lie strictly between 0 and `epsilon`.
    pub alpha: f64,
    /// Momentum decay of the accumulated gradient.
    pub momentum_decay: f64,
    pub iterations: usize,
    /// Radius of the seeded offset at which the first gradient is taken, as a
    /// fraction of `epsilon`. The cosine loss is stationary at the original
    /// utterance, so its gradient there is zero; zero disables the offset.
    pub probe_radius: f64,
    pub seed: u64,
}

impl Default for MifgsmConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            alpha: 0.005,
            momentum_decay: 1.0,
            iterations: 10,
            probe_radius: 0.1,
            seed: 0,
        }
    }
}

impl MifgsmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.alpha > 0.0 && self.alpha < self.epsilon) {
            return Err(Error::Config(format!(
                "mifgsm needs 0 < alpha < epsilon, got alpha={} epsilon={}",
                self.alpha, self.epsilon
            )));
        }
        if !(self.momentum_decay >= 0.0 && self.momentum_decay.is_finite()) {
            return Err(Error::Config("mifgsm momentum decay must be finite and non-negative".into()));
        }
        if self.iterations == 0 {
            return Err(Error::Config("mifgsm needs at least one iteration".into()));
        }
        if !(self.probe_radius >= 0.0 && self.probe_radius <= 1.0) {
            return Err(Error::Config("mifgsm probe radius must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackResult {
    #[serde(skip)]
    pub adversarial: Waveform,
    #[serde(skip)]
    pub perturbation: Vec<f64>,
    /// Loss at each iterate after its update, one entry per iteration.
    pub loss_trace: Vec<f64>,
    /// Iterations whose gradient had zero L1 norm and contributed nothing.
    pub zero_gradient_iterations: usize,
    pub linf: f64,
    pub config: MifgsmConfig,
}

/// `-cos(y, ỹ)`.
pub fn adversarial_loss(y: &SpeakerEmbedding, y_tilde: &SpeakerEmbedding) -> Result<f64> {
    cosine_with_grad(y.values(), y_tilde.values()).map(|(c, _)| -c)
}

/// Clamps `candidate` into `[origin - ε, origin + ε]` and then into `[-1, 1]`.
pub fn clip_to_ball(candidate: &Waveform, origin: &Waveform, epsilon: f64) -> Result<Waveform> {
    let samples = clip_samples(candidate.samples(), origin.samples(), epsilon)?;
    candidate.derive(samples)
}

fn clip_samples(candidate: &[f64], origin: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    if candidate.len() != origin.len() {
        return Err(Error::LengthMismatch {
            left: candidate.len(),
            right: origin.len(),
        });
    }
    Ok(candidate
        .iter()
        .zip(origin)
        .map(|(&c, &o)| within_ball(c.clamp(o - epsilon, o + epsilon).clamp(-1.0, 1.0), o, epsilon))
        .collect())
}

/// `o ± ε` is rounded, so the clamped value can sit one ulp outside the
/// ball as measured by `|v - o|`; step it back toward `o` until it is not.
fn within_ball(mut v: f64, o: f64, epsilon: f64) -> f64 {
    while (v - o).abs() > epsilon {
        v = if v > o { v.next_down() } else { v.next_up() };
    }
    v
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Runs MI-FGSM against `model` starting from `w`.
pub fn mifgsm_attack<E>(model: &E, w: &Waveform, cfg: &MifgsmConfig) -> Result<AttackResult>
where
    E: DifferentiableEmbedder + ?Sized,
{
    cfg.validate()?;
    let radius = cfg.probe_radius * cfg.epsilon;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let probe: Vec<f64> = if radius > 0.0 {
        (0..w.len()).map(|_| rng.gen_range(-radius..=radius)).collect()
    } else {
        vec![0.0; w.len()]
    };
    mifgsm_with_probe(model, w, cfg, &probe)
}

/// MI-FGSM with an explicit offset for the first gradient evaluation.
///
/// The iterate itself always starts at `w`; only the point where the first
/// gradient is taken moves to `clamp(w + probe)`.
pub fn mifgsm_with_probe<E>(
    model: &E,
    w: &Waveform,
    cfg: &MifgsmConfig,
    probe: &[f64],
) -> Result<AttackResult>
where
    E: DifferentiableEmbedder + ?Sized,
{
    cfg.validate()?;
    if probe.len() != w.len() {
        return Err(Error::LengthMismatch {
            left: probe.len(),
            right: w.len(),
        });
    }
    let origin = w.samples();
    let y = model.embed_samples(origin)?;
    let loss = |e: &SpeakerEmbedding| -> Result<(f64, Vec<f64>)> {
        let (c, g) = cosine_with_grad(&y, e.values())?;
        Ok((-c, g.into_iter().map(|v| -v).collect()))
    };

    let mut x = origin.to_vec();
    let mut g = vec![0.0; x.len()];
    let mut trace = Vec::with_capacity(cfg.iterations);
    let mut zero_events = 0;
    let start: Vec<f64> = origin
        .iter()
        .zip(probe)
        .map(|(o, p)| (o + p).clamp(-1.0, 1.0))
        .collect();
    let (_, mut grad) = input_gradient(model, &start, loss)?;
    for i in 0..cfg.iterations {
        let l1: f64 = grad.iter().map(|v| v.abs()).sum();
        if l1 > 0.0 {
            for (gi, d) in g.iter_mut().zip(&grad) {
                *gi = cfg.momentum_decay * *gi + d / l1;
            }
        } else {
            zero_events += 1;
            g.iter_mut().for_each(|gi| *gi *= cfg.momentum_decay);
        }
        let stepped: Vec<f64> = x.iter().zip(&g).map(|(v, gi)| v + cfg.alpha * sign(*gi)).collect();
        x = clip_samples(&stepped, origin, cfg.epsilon)?;
        let value = if i + 1 < cfg.iterations {
            let (value, next) = input_gradient(model, &x, loss)?;
            grad = next;
            value
        } else {
            let e = SpeakerEmbedding::new(model.embed_samples(&x)?)?;
            loss(&e)?.0
        };
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("attack loss at iteration {i}")));
        }
        trace.push(value);
    }

    let perturbation: Vec<f64> = x.iter().zip(origin).map(|(a, o)| a - o).collect();
    let linf = perturbation.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    Ok(AttackResult {
        adversarial: w.derive(x)?,
        perturbation,
        loss_trace: trace,
        zero_gradient_iterations: zero_events,
        linf,
        config: cfg.clone(),
    })
}
