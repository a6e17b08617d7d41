use std::cell::{OnceCell, RefCell};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::BenchConfig;
use super::scenario::AttackKind;
use crate::attack::mifgsm_attack;
use crate::audio::{Corpus, Waveform};
use crate::checkpoint::{load_encoder, load_ssed, save_encoder, save_ssed};
use crate::encoder::{train_encoder, EncoderConfig, EncoderModel};
use crate::error::{Error, Result};
use crate::seed::mix_seed;
use crate::ssed::{generator_forward, SsedNet};
use crate::training::{
    train_denoiser_g, train_independent, train_joint, train_noise_denoiser, train_pair_denoiser, TrainedPair,
};

/// Environment variable naming the checkpoint cache directory.
pub const CACHE_ENV: &str = "PERTURB_BENCH_CACHE";

/// Corpora plus lazily trained models for one configuration.
///
/// Every model is trained at most once per workbench. With a cache
/// directory, checkpoints are keyed by a hash of everything that determines
/// them and reused across processes.
pub struct Workbench {
    pub config: BenchConfig,
    pub train: Corpus,
    pub test: Corpus,
    cache: Option<PathBuf>,
    white: OnceCell<EncoderModel>,
    black: OnceCell<EncoderModel>,
    joint: OnceCell<(SsedNet, SsedNet)>,
    independent: OnceCell<(SsedNet, SsedNet)>,
    denoiser_g: OnceCell<SsedNet>,
    noise_denoiser: OnceCell<SsedNet>,
    pair_mifgsm: OnceCell<SsedNet>,
    pair_ssed: OnceCell<SsedNet>,
    /// Attacked test utterances per (attack, independent generator).
    attacked_test: RefCell<BTreeMap<(AttackKind, bool), Vec<Waveform>>>,
}

impl Workbench {
    pub fn new(config: BenchConfig, cache: Option<PathBuf>) -> Result<Self> {
        config.validate()?;
        let train = config.corpus.train()?;
        let test = config.corpus.test()?;
        train.check_disjoint(&test)?;
        if let Some(dir) = &cache {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        Ok(Self {
            config,
            train,
            test,
            cache,
            white: OnceCell::new(),
            black: OnceCell::new(),
            joint: OnceCell::new(),
            independent: OnceCell::new(),
            denoiser_g: OnceCell::new(),
            noise_denoiser: OnceCell::new(),
            pair_mifgsm: OnceCell::new(),
            pair_ssed: OnceCell::new(),
            attacked_test: RefCell::new(BTreeMap::new()),
        })
    }

    /// Cache directory from [`CACHE_ENV`], if set and non-empty.
    pub fn cache_from_env() -> Option<PathBuf> {
        std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
    }

    fn key(&self, kind: &str, parts: &impl Serialize) -> Result<String> {
        let mut h = Sha256::new();
        h.update(kind.as_bytes());
        h.update(serde_json::to_vec(&self.config.corpus)?);
        h.update(serde_json::to_vec(parts)?);
        let digest = h.finalize();
        Ok(format!("{kind}-{}", digest.iter().take(8).map(|b| format!("{b:02x}")).collect::<String>()))
    }

    fn cached_path(&self, key: &str, suffix: &str) -> Option<PathBuf> {
        self.cache.as_ref().map(|d| d.join(format!("{key}{suffix}.ckpt")))
    }

    fn encoder<'a>(&self, cell: &'a OnceCell<EncoderModel>, cfg: &EncoderConfig, name: &str) -> Result<&'a EncoderModel> {
        if let Some(m) = cell.get() {
            return Ok(m);
        }
        let key = self.key(name, cfg)?;
        let path = self.cached_path(&key, "");
        let model = match path.as_deref().filter(|p| p.exists()) {
            Some(p) => load_encoder(p)?,
            None => {
                let m = train_encoder(&self.train, cfg)?;
                if let Some(p) = &path {
                    save_encoder(&m, p)?;
                }
                m
            }
        };
        Ok(cell.get_or_init(|| model))
    }

    pub fn white(&self) -> Result<&EncoderModel> {
        self.encoder(&self.white, &self.config.encoder.white, "encoder-white")
    }

    pub fn black(&self) -> Result<&EncoderModel> {
        self.encoder(&self.black, &self.config.encoder.black, "encoder-black")
    }

    fn ssed_cached<'a, F>(&self, cell: &'a OnceCell<SsedNet>, key: String, train: F) -> Result<&'a SsedNet>
    where
        F: FnOnce() -> Result<SsedNet>,
    {
        if let Some(m) = cell.get() {
            return Ok(m);
        }
        let path = self.cached_path(&key, "");
        let net = match path.as_deref().filter(|p| p.exists()) {
            Some(p) => load_ssed(p)?,
            None => {
                let n = train()?;
                if let Some(p) = &path {
                    save_ssed(&n, p)?;
                }
                n
            }
        };
        Ok(cell.get_or_init(|| net))
    }

    fn pair_cached<'a, F>(
        &self,
        cell: &'a OnceCell<(SsedNet, SsedNet)>,
        key: String,
        train: F,
    ) -> Result<&'a (SsedNet, SsedNet)>
    where
        F: FnOnce() -> Result<TrainedPair>,
    {
        if let Some(m) = cell.get() {
            return Ok(m);
        }
        let paths = self
            .cached_path(&key, "-generator")
            .zip(self.cached_path(&key, "-remover"));
        let pair = match &paths {
            Some((g, r)) if g.exists() && r.exists() => (load_ssed(g)?, load_ssed(r)?),
            _ => {
                let p = train()?;
                if let Some((g, r)) = &paths {
                    save_ssed(&p.generator, g)?;
                    save_ssed(&p.remover, r)?;
                }
                (p.generator, p.remover)
            }
        };
        Ok(cell.get_or_init(|| pair))
    }

    /// Jointly trained generator and remover.
    pub fn joint(&self) -> Result<&(SsedNet, SsedNet)> {
        let white = self.white()?;
        let key = self.key("joint", &(&self.config.encoder.white, &self.config.training))?;
        self.pair_cached(&self.joint, key, || train_joint(&self.train, white, &self.config.training))
    }

    pub fn independent(&self) -> Result<&(SsedNet, SsedNet)> {
        let white = self.white()?;
        let key = self.key("independent", &(&self.config.encoder.white, &self.config.training))?;
        self.pair_cached(&self.independent, key, || {
            train_independent(&self.train, white, &self.config.training)
        })
    }

    /// Remover trained against the frozen joint generator.
    pub fn denoiser_g(&self) -> Result<&SsedNet> {
        let generator = &self.joint()?.0;
        let key = self.key("denoiser-g", &(&self.config.encoder.white, &self.config.training))?;
        self.ssed_cached(&self.denoiser_g, key, || {
            Ok(train_denoiser_g(&self.train, generator, &self.config.training)?.0)
        })
    }

    pub fn noise_denoiser(&self) -> Result<&SsedNet> {
        let key = self.key("noise-denoiser", &self.config.training)?;
        self.ssed_cached(&self.noise_denoiser, key, || {
            Ok(train_noise_denoiser(&self.train, &self.config.training)?.0)
        })
    }

    /// Remover trained on training utterances paired with their attacked
    /// versions.
    pub fn pair_denoiser(&self, attack: AttackKind) -> Result<&SsedNet> {
        let (cell, key) = match attack {
            AttackKind::Mifgsm => (
                &self.pair_mifgsm,
                self.key(
                    "pair-mifgsm",
                    &(&self.config.encoder.white, &self.config.attack, &self.config.training),
                )?,
            ),
            AttackKind::Ssed => (
                &self.pair_ssed,
                self.key("pair-ssed", &(&self.config.encoder.white, &self.config.training))?,
            ),
        };
        self.ssed_cached(cell, key, || {
            let adv = self.attack_all(attack, self.train.utterances(), None)?;
            Ok(train_pair_denoiser(&self.train, &adv, &self.config.training)?.0)
        })
    }

    /// Generator used for the SSED attack. The independent ablation attacks
    /// with its own generator; everything else uses the joint one.
    pub fn attack_generator(&self, independent: bool) -> Result<&SsedNet> {
        Ok(if independent {
            &self.independent()?.0
        } else {
            &self.joint()?.0
        })
    }

    /// Attacks each waveform. `generator` overrides the SSED generator.
    pub fn attack_all(
        &self,
        attack: AttackKind,
        utterances: &[Waveform],
        generator: Option<&SsedNet>,
    ) -> Result<Vec<Waveform>> {
        match attack {
            AttackKind::Mifgsm => {
                let white = self.white()?;
                utterances
                    .iter()
                    .enumerate()
                    .map(|(i, w)| {
                        let mut cfg = self.config.attack.mifgsm.clone();
                        cfg.seed = mix_seed(cfg.seed, i as u64);
                        Ok(mifgsm_attack(white, w, &cfg)?.adversarial)
                    })
                    .collect()
            }
            AttackKind::Ssed => {
                let g = match generator {
                    Some(g) => g,
                    None => self.attack_generator(false)?,
                };
                utterances.iter().map(|w| Ok(generator_forward(g, w)?.output)).collect()
            }
        }
    }

    /// Attacked versions of the test utterances at `idx`, computed once per
    /// attack so scenarios sharing an attack see identical inputs.
    pub fn attack_test(&self, attack: AttackKind, independent: bool, idx: &[usize]) -> Result<Vec<Waveform>> {
        let key = (attack, independent && attack == AttackKind::Ssed);
        if let Some(v) = self.attacked_test.borrow().get(&key) {
            if v.len() == idx.len() {
                return Ok(v.clone());
            }
        }
        let originals: Vec<Waveform> = idx.iter().map(|&i| self.test.utterances()[i].clone()).collect();
        let generator = match attack {
            AttackKind::Ssed => Some(self.attack_generator(key.1)?),
            AttackKind::Mifgsm => None,
        };
        let adv = self.attack_all(attack, &originals, generator)?;
        self.attacked_test.borrow_mut().insert(key, adv.clone());
        Ok(adv)
    }

    pub fn cache_dir(&self) -> Option<&Path> {
        self.cache.as_deref()
    }
}
