use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::waveform::Waveform;
use super::wav::{load_wav, save_wav};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Speaker {
    pub id: String,
    pub gender: Gender,
}

/// One line of a corpus manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub utterance_id: String,
    pub speaker_id: String,
    pub gender: Gender,
    /// Relative to the manifest's directory.
    pub path: String,
}

/// A set of utterances with their speakers.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    utterances: Vec<Waveform>,
    speakers: Vec<Speaker>,
    pub split: Split,
}

impl Corpus {
    pub fn new(utterances: Vec<Waveform>, speakers: Vec<Speaker>, split: Split) -> Result<Self> {
        let known: BTreeSet<&str> = speakers.iter().map(|s| s.id.as_str()).collect();
        if known.len() != speakers.len() {
            return Err(Error::InvalidInput("duplicate speaker id".into()));
        }
        if let Some(u) = utterances.iter().find(|u| !known.contains(u.speaker_id.as_str())) {
            return Err(Error::InvalidInput(format!(
                "utterance {} has unknown speaker {}",
                u.utterance_id, u.speaker_id
            )));
        }
        Ok(Self {
            utterances,
            speakers,
            split,
        })
    }

    pub fn utterances(&self) -> &[Waveform] {
        &self.utterances
    }

    pub fn speakers(&self) -> &[Speaker] {
        &self.speakers
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn speaker(&self, id: &str) -> Option<&Speaker> {
        self.speakers.iter().find(|s| s.id == id)
    }

    /// Utterance indices grouped by speaker, in speaker order.
    pub fn by_speaker(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut map: BTreeMap<&str, Vec<usize>> =
            self.speakers.iter().map(|s| (s.id.as_str(), Vec::new())).collect();
        for (i, u) in self.utterances.iter().enumerate() {
            map.get_mut(u.speaker_id.as_str())
                .expect("validated in constructor")
                .push(i);
        }
        map
    }

    /// Index of each speaker in [`Corpus::speakers`], used as a class label.
    pub fn speaker_index(&self, id: &str) -> Option<usize> {
        self.speakers.iter().position(|s| s.id == id)
    }

    /// Replaces every utterance, keeping speakers and split.
    pub fn with_utterances(&self, utterances: Vec<Waveform>) -> Result<Self> {
        Self::new(utterances, self.speakers.clone(), self.split)
    }

    pub fn total_seconds(&self) -> f64 {
        self.utterances.iter().map(Waveform::duration_seconds).sum()
    }

    /// Errors unless the two corpora share no speaker.
    pub fn check_disjoint(&self, other: &Corpus) -> Result<()> {
        let mine: BTreeSet<&str> = self.speakers.iter().map(|s| s.id.as_str()).collect();
        match other.speakers.iter().find(|s| mine.contains(s.id.as_str())) {
            Some(s) => Err(Error::InvalidInput(format!(
                "speaker {} appears in both splits",
                s.id
            ))),
            None => Ok(()),
        }
    }

    pub fn manifest(&self) -> Vec<ManifestEntry> {
        self.utterances
            .iter()
            .map(|u| ManifestEntry {
                utterance_id: u.utterance_id.clone(),
                speaker_id: u.speaker_id.clone(),
                gender: self.speaker(&u.speaker_id).expect("validated").gender,
                path: format!("{}.wav", u.utterance_id),
            })
            .collect()
    }

    /// Writes one WAV per utterance plus `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = self.manifest();
        for (u, entry) in self.utterances.iter().zip(&manifest) {
            save_wav(u, dir.join(&entry.path))?;
        }
        write_manifest(&dir.join("manifest.json"), &manifest)
    }

    /// Loads a corpus from a manifest file; paths resolve against its directory.
    pub fn load(manifest_path: &Path, split: Split) -> Result<Self> {
        let entries = read_manifest(manifest_path)?;
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let mut speakers: Vec<Speaker> = Vec::new();
        let mut utterances = Vec::with_capacity(entries.len());
        for e in entries {
            match speakers.iter().find(|s| s.id == e.speaker_id) {
                Some(s) if s.gender != e.gender => {
                    return Err(Error::InvalidInput(format!(
                        "speaker {} listed with two genders",
                        e.speaker_id
                    )))
                }
                Some(_) => {}
                None => speakers.push(Speaker {
                    id: e.speaker_id.clone(),
                    gender: e.gender,
                }),
            }
            utterances.push(load_wav(base.join(&e.path))?.with_ids(e.speaker_id, e.utterance_id));
        }
        Self::new(utterances, speakers, split)
    }
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let text = serde_json::to_string_pretty(entries)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::SAMPLE_RATE;

    fn utt(spk: &str, id: &str, v: f64) -> Waveform {
        Waveform::new(vec![v; 800], SAMPLE_RATE).unwrap().with_ids(spk, id)
    }

    #[test]
    fn unknown_speaker_rejected() {
        let speakers = vec![Speaker { id: "a".into(), gender: Gender::Male }];
        assert!(Corpus::new(vec![utt("b", "u", 0.1)], speakers, Split::Train).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let speakers = vec![
            Speaker { id: "a".into(), gender: Gender::Male },
            Speaker { id: "b".into(), gender: Gender::Female },
        ];
        let c = Corpus::new(
            vec![utt("a", "a-0", 0.25), utt("b", "b-0", -0.5)],
            speakers,
            Split::Test,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        c.write(dir.path()).unwrap();
        let back = Corpus::load(&dir.path().join("manifest.json"), Split::Test).unwrap();
        assert_eq!(back.speakers(), c.speakers());
        assert_eq!(back.utterances()[1].utterance_id, "b-0");
        assert_eq!(back.utterances()[1].samples()[0], -0.5);
    }

    #[test]
    fn disjointness_check() {
        let mk = |id: &str| {
            Corpus::new(
                vec![utt(id, "u", 0.1)],
                vec![Speaker { id: id.into(), gender: Gender::Female }],
                Split::Train,
            )
            .unwrap()
        };
        assert!(mk("x").check_disjoint(&mk("y")).is_ok());
        assert!(mk("x").check_disjoint(&mk("x")).is_err());
    }
}
