use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attack::MifgsmConfig;
use crate::audio::{synth_corpus, Corpus, Split};
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::seed::stage_seed;
use crate::training::JointConfig;

/// Where the train and test corpora come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub train_speakers: usize,
    pub train_utterances: usize,
    pub test_speakers: usize,
    pub test_utterances: usize,
    pub utterance_seconds: f64,
    pub train_seed: u64,
    pub test_seed: u64,
    /// Manifests of recorded corpora; when set they replace the synthetic
    /// corpus of the same split.
    pub train_manifest: Option<PathBuf>,
    pub test_manifest: Option<PathBuf>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            train_speakers: 20,
            train_utterances: 10,
            test_speakers: 20,
            test_utterances: 4,
            utterance_seconds: 2.0,
            train_seed: 100,
            test_seed: 200,
            train_manifest: None,
            test_manifest: None,
        }
    }
}

impl CorpusConfig {
    pub fn train(&self) -> Result<Corpus> {
        match &self.train_manifest {
            Some(p) => Corpus::load(p, Split::Train),
            None => synth_corpus(
                self.train_speakers,
                self.train_utterances,
                self.utterance_seconds,
                self.train_seed,
            ),
        }
    }

    pub fn test(&self) -> Result<Corpus> {
        let mut c = match &self.test_manifest {
            Some(p) => return Corpus::load(p, Split::Test),
            None => synth_corpus(
                self.test_speakers,
                self.test_utterances,
                self.utterance_seconds,
                self.test_seed,
            )?,
        };
        c.split = Split::Test;
        Ok(c)
    }
}

/// White-box encoder (attack target and evaluator) and black-box evaluator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSection {
    pub white: EncoderConfig,
    pub black: EncoderConfig,
}

impl Default for EncoderSection {
    fn default() -> Self {
        Self {
            white: EncoderConfig::default(),
            black: EncoderConfig {
                channels: 48,
                embed_dim: 24,
                seed: 2,
                ..EncoderConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSection {
    pub mifgsm: MifgsmConfig,
}

/// Parameters of the attack-agnostic defenses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemovalSection {
    pub qt_lambda: u32,
    pub ms_kernel: usize,
    pub an_snr_db: f64,
    pub an_seed: u64,
}

impl Default for RemovalSection {
    fn default() -> Self {
        Self {
            qt_lambda: 256,
            ms_kernel: 3,
            an_snr_db: 25.0,
            an_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    pub trial_seed: u64,
    pub nontarget_per_speaker: usize,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self {
            trial_seed: 0,
            nontarget_per_speaker: 30,
        }
    }
}

/// Full benchmark configuration as read from a JSON file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub corpus: CorpusConfig,
    pub encoder: EncoderSection,
    pub attack: AttackSection,
    pub removal: RemovalSection,
    pub training: JointConfig,
    pub metrics: MetricsSection,
}

impl BenchConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.white.validate()?;
        self.encoder.black.validate()?;
        self.attack.mifgsm.validate()?;
        self.training.validate()?;
        if self.metrics.nontarget_per_speaker == 0 {
            return Err(Error::Config("nontarget_per_speaker must be positive".into()));
        }
        Ok(())
    }

    /// Derives every stage seed from one run seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.encoder.white.seed = stage_seed(seed, "encoder-white");
        self.encoder.black.seed = stage_seed(seed, "encoder-black");
        self.attack.mifgsm.seed = stage_seed(seed, "mifgsm");
        self.removal.an_seed = stage_seed(seed, "an");
        self.training.seed = stage_seed(seed, "training");
        self.metrics.trial_seed = stage_seed(seed, "trials");
        self
    }

    /// Every seed in the configuration, by name.
    pub fn seeds(&self) -> Vec<(&'static str, u64)> {
        vec![
            ("corpus.train_seed", self.corpus.train_seed),
            ("corpus.test_seed", self.corpus.test_seed),
            ("encoder.white.seed", self.encoder.white.seed),
            ("encoder.black.seed", self.encoder.black.seed),
            ("attack.mifgsm.seed", self.attack.mifgsm.seed),
            ("removal.an_seed", self.removal.an_seed),
            ("training.seed", self.training.seed),
            ("metrics.trial_seed", self.metrics.trial_seed),
        ]
    }
}
