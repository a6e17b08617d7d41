use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::config::BenchConfig;
use super::models::Workbench;
use super::scenario::{Removal, Scenario, ScenarioSpec};
use super::trials::{build_trials, TrialSet};
use crate::audio::{save_wav, Waveform};
use crate::defenses::Defense;
use crate::encoder::{cosine_score, embed, EncoderModel, SpeakerEmbedding};
use crate::error::{Error, Result};
use crate::metrics::{compute_eer, mse, pitch_correlation_stats, si_snr, SI_SNR_CAP_DB};
use crate::seed::mix_seed;
use crate::ssed::remover_forward;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Condition {
    Ori,
    Adv,
    Processed,
}

/// One report line. EERs are percentages; SI-SNR is in dB and MSE is scaled
/// by 10⁶. PESQ and WER are left empty for external tools.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub condition: Condition,
    pub method: String,
    pub si_snr: f64,
    pub mse: f64,
    pub eer_white: f64,
    pub eer_black: f64,
    pub pitch_mean: Option<f64>,
    pub pitch_std: Option<f64>,
    pub pesq: Option<f64>,
    pub wer: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub spec: ScenarioSpec,
    pub label: String,
    pub version: String,
    pub seeds: BTreeMap<String, u64>,
    pub config: BenchConfig,
    pub target_trials: usize,
    pub nontarget_trials: usize,
    pub speakers_with_replacement: usize,
    pub attacked_utterances: usize,
    /// Pitch pairs skipped per condition for lack of jointly voiced frames.
    pub pitch_pairs_skipped: BTreeMap<String, usize>,
    /// Methods of the original study this benchmark does not provide.
    pub absent_methods: Vec<String>,
    /// Only field that differs between identical runs.
    pub generated_at_unix: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub rows: Vec<ReportRow>,
    pub metadata: RunMetadata,
}

impl ScenarioReport {
    pub fn row(&self, condition: Condition) -> &ReportRow {
        self.rows
            .iter()
            .find(|r| r.condition == condition)
            .expect("every report has one row per condition")
    }

    /// Copy with the timestamp zeroed, for reproducibility comparisons.
    pub fn without_timestamp(&self) -> Self {
        let mut r = self.clone();
        r.metadata.generated_at_unix = 0;
        r
    }
}

fn eer_for(trials: &TrialSet, enroll: &BTreeMap<usize, SpeakerEmbedding>, tests: &BTreeMap<usize, SpeakerEmbedding>) -> Result<f64> {
    let mut target = Vec::new();
    let mut nontarget = Vec::new();
    for t in &trials.trials {
        let s = cosine_score(&enroll[&t.enroll], &tests[&t.test])?;
        if t.is_target {
            target.push(s);
        } else {
            nontarget.push(s);
        }
    }
    Ok(compute_eer(&target, &nontarget)? * 100.0)
}

fn embed_map(model: &EncoderModel, idx: &[usize], waves: &[&Waveform]) -> Result<BTreeMap<usize, SpeakerEmbedding>> {
    idx.iter()
        .zip(waves)
        .map(|(&i, w)| Ok((i, embed(model, w)?)))
        .collect()
}

fn apply_removal(bench: &Workbench, spec: &ScenarioSpec, adv: &[Waveform]) -> Result<Vec<Waveform>> {
    let rcfg = &bench.config.removal;
    let defense = |d: Defense| adv.iter().map(|w| d.apply(w)).collect::<Result<Vec<_>>>();
    let remover = |r: &crate::ssed::SsedNet| {
        adv.iter()
            .map(|w| Ok(remover_forward(r, w)?.output))
            .collect::<Result<Vec<_>>>()
    };
    match spec.removal {
        Removal::None => Ok(adv.to_vec()),
        Removal::Qt => defense(Defense::Qt {
            lambda_level: rcfg.qt_lambda,
        }),
        Removal::Ms => defense(Defense::Ms { kernel: rcfg.ms_kernel }),
        Removal::An => adv
            .iter()
            .enumerate()
            .map(|(i, w)| {
                Defense::An {
                    snr_db: rcfg.an_snr_db,
                    seed: mix_seed(rcfg.an_seed, i as u64),
                }
                .apply(w)
            })
            .collect(),
        Removal::NoiseDenoiser => remover(bench.noise_denoiser()?),
        Removal::PairDenoiser => remover(bench.pair_denoiser(spec.attack)?),
        Removal::DenoisingG => remover(bench.denoiser_g()?),
        Removal::Joint => remover(&bench.joint()?.1),
        Removal::Independent => remover(&bench.independent()?.1),
    }
}

/// Attack, removal and metrics for one scenario cell over the test trials.
/// Adversarial and processed waveforms are written under `out_dir/wav`.
pub fn run_scenario(spec: &ScenarioSpec, bench: &Workbench, out_dir: Option<&Path>) -> Result<ScenarioReport> {
    spec.validate()?;
    let cfg = &bench.config;
    let test = &bench.test;
    let trials = build_trials(test, cfg.metrics.trial_seed, cfg.metrics.nontarget_per_speaker)?;
    let enroll_idx = trials.enroll_indices();
    let attacked_idx: Vec<usize> = (0..test.len()).filter(|i| enroll_idx.binary_search(i).is_err()).collect();
    let originals: Vec<Waveform> = attacked_idx.iter().map(|&i| test.utterances()[i].clone()).collect();

    let adv = bench.attack_test(spec.attack, spec.removal == Removal::Independent, &attacked_idx)?;
    let processed = apply_removal(bench, spec, &adv)?;

    let white = bench.white()?;
    let black = bench.black()?;
    let enroll_w: Vec<&Waveform> = enroll_idx.iter().map(|&i| &test.utterances()[i]).collect();
    let enroll_white = embed_map(white, &enroll_idx, &enroll_w)?;
    let enroll_black = embed_map(black, &enroll_idx, &enroll_w)?;

    let mut rows = Vec::new();
    let mut skipped = BTreeMap::new();
    let conditions: [(Condition, String, &[Waveform]); 3] = [
        (Condition::Ori, "-".to_string(), &originals),
        (Condition::Adv, spec.attack.id().to_string(), &adv),
        (Condition::Processed, spec.removal.id().to_string(), &processed),
    ];
    for (condition, method, waves) in conditions {
        let refs: Vec<&Waveform> = waves.iter().collect();
        let eer_white = eer_for(&trials, &enroll_white, &embed_map(white, &attacked_idx, &refs)?)?;
        let eer_black = eer_for(&trials, &enroll_black, &embed_map(black, &attacked_idx, &refs)?)?;
        let n = waves.len() as f64;
        let (si, ms) = if condition == Condition::Ori {
            (SI_SNR_CAP_DB, 0.0)
        } else {
            let mut si = 0.0;
            let mut ms = 0.0;
            for (w, o) in waves.iter().zip(&originals) {
                si += si_snr(w, o)?;
                ms += mse(w, o)?;
            }
            (si / n, ms / n)
        };
        let pairs: Vec<(&Waveform, &Waveform)> = waves.iter().zip(&originals).collect();
        let (pitch_mean, pitch_std) = match pitch_correlation_stats(&pairs) {
            Ok(p) => {
                skipped.insert(format!("{condition:?}"), p.pairs_skipped);
                (Some(p.mean), Some(p.std))
            }
            Err(Error::InvalidInput(_)) => {
                skipped.insert(format!("{condition:?}"), pairs.len());
                (None, None)
            }
            Err(e) => return Err(e),
        };
        rows.push(ReportRow {
            condition,
            method,
            si_snr: si,
            mse: ms,
            eer_white,
            eer_black,
            pitch_mean,
            pitch_std,
            pesq: None,
            wer: None,
        });
    }

    if let Some(dir) = out_dir {
        for (sub, waves) in [("adv", &adv), ("processed", &processed)] {
            let d = dir.join("wav").join(sub);
            fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
            for w in waves.iter() {
                save_wav(w, d.join(format!("{}.wav", w.utterance_id)))?;
            }
        }
        let p = dir.join("trials.json");
        fs::write(&p, serde_json::to_string_pretty(&trials)?).map_err(|e| Error::io(&p, e))?;
    }

    let absent_methods = match spec.scenario {
        Scenario::SemiInformed => vec!["dccrn-a".into(), "frcrn-a".into()],
        Scenario::Ignorant => vec!["aac".into(), "gan".into()],
        Scenario::WellInformed => Vec::new(),
    };
    Ok(ScenarioReport {
        rows,
        metadata: RunMetadata {
            spec: *spec,
            label: spec.label(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seeds: cfg.seeds().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            config: cfg.clone(),
            target_trials: trials.target_count(),
            nontarget_trials: trials.nontarget_count(),
            speakers_with_replacement: trials.drawn_with_replacement.len(),
            attacked_utterances: attacked_idx.len(),
            pitch_pairs_skipped: skipped,
            absent_methods,
            generated_at_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        },
    })
}
