use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{Corpus, Gender};
use crate::error::{Error, Result};

/// One verification pair. Indices refer to the corpus the set was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub enroll: usize,
    pub test: usize,
    pub enroll_id: String,
    pub test_id: String,
    pub is_target: bool,
    pub gender: Gender,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSet {
    pub trials: Vec<Trial>,
    /// Speakers whose nontarget pool was smaller than the requested count, so
    /// nontarget tests were drawn with replacement.
    pub drawn_with_replacement: Vec<String>,
    pub seed: u64,
}

impl TrialSet {
    pub fn target_count(&self) -> usize {
        self.trials.iter().filter(|t| t.is_target).count()
    }

    pub fn nontarget_count(&self) -> usize {
        self.trials.len() - self.target_count()
    }

    /// Sorted, deduplicated indices of every enrollment utterance.
    pub fn enroll_indices(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.trials.iter().map(|t| t.enroll).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// Per speaker: the first utterance enrolls, one other own utterance is the
/// target test, and `nontarget_per_speaker` tests come from non-enrollment
/// utterances of other speakers of the same gender.
pub fn build_trials(corpus: &Corpus, seed: u64, nontarget_per_speaker: usize) -> Result<TrialSet> {
    let by_speaker = corpus.by_speaker();
    let mut gender_of = BTreeMap::new();
    for s in corpus.speakers() {
        gender_of.insert(s.id.as_str(), s.gender);
    }
    for (spk, idx) in &by_speaker {
        if idx.len() < 2 {
            return Err(Error::DegenerateCorpus(format!(
                "speaker {spk} has {} utterance(s), trials need at least 2",
                idx.len()
            )));
        }
    }
    for g in [Gender::Male, Gender::Female] {
        let n = gender_of.values().filter(|&&x| x == g).count();
        if n == 1 {
            return Err(Error::DegenerateCorpus(format!(
                "only one {g:?} speaker, so no same-gender nontarget source exists"
            )));
        }
    }
    if by_speaker.is_empty() {
        return Err(Error::DegenerateCorpus("corpus has no speakers".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trials = Vec::new();
    let mut drawn_with_replacement = Vec::new();
    let utt = corpus.utterances();
    let trial = |e: usize, t: usize, is_target: bool, gender: Gender| Trial {
        enroll: e,
        test: t,
        enroll_id: utt[e].utterance_id.clone(),
        test_id: utt[t].utterance_id.clone(),
        is_target,
        gender,
    };
    for (spk, idx) in &by_speaker {
        let gender = gender_of[spk];
        let enroll = idx[0];
        let target = idx[1..][rng.gen_range(0..idx.len() - 1)];
        trials.push(trial(enroll, target, true, gender));
        let pool: Vec<usize> = by_speaker
            .iter()
            .filter(|(other, _)| *other != spk && gender_of[*other] == gender)
            .flat_map(|(_, v)| v[1..].iter().copied())
            .collect();
        let picks: Vec<usize> = if pool.len() >= nontarget_per_speaker {
            pool.choose_multiple(&mut rng, nontarget_per_speaker).copied().collect()
        } else {
            drawn_with_replacement.push(spk.to_string());
            (0..nontarget_per_speaker)
                .map(|_| pool[rng.gen_range(0..pool.len())])
                .collect()
        };
        for t in picks {
            trials.push(trial(enroll, t, false, gender));
        }
    }
    Ok(TrialSet {
        trials,
        drawn_with_replacement,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{synth_corpus, Speaker, Split, Waveform, SAMPLE_RATE};

    fn labelled(genders: &[Gender], utts: usize) -> Corpus {
        let mut speakers = Vec::new();
        let mut utterances = Vec::new();
        for (s, g) in genders.iter().enumerate() {
            let id = format!("spk{s}");
            for u in 0..utts {
                utterances.push(
                    Waveform::new(vec![0.1; 8], SAMPLE_RATE)
                        .unwrap()
                        .with_ids(id.clone(), format!("{id}-{u}")),
                );
            }
            speakers.push(Speaker { id, gender: *g });
        }
        Corpus::new(utterances, speakers, Split::Test).unwrap()
    }

    #[test]
    fn counts_per_speaker() {
        let c = synth_corpus(20, 3, 0.05, 4).unwrap();
        let t = build_trials(&c, 1, 30).unwrap();
        assert_eq!(t.target_count(), 20);
        assert_eq!(t.nontarget_count(), 600);
        assert_eq!(t, build_trials(&c, 1, 30).unwrap());
    }

    #[test]
    fn nontargets_are_same_gender_other_speakers() {
        let g = [Gender::Male, Gender::Male, Gender::Female, Gender::Female, Gender::Female];
        let c = labelled(&g, 4);
        let t = build_trials(&c, 3, 30).unwrap();
        let u = c.utterances();
        for tr in &t.trials {
            let (e, x) = (&u[tr.enroll], &u[tr.test]);
            assert_eq!(tr.enroll_id, e.utterance_id);
            assert_ne!(tr.enroll, tr.test);
            assert!(!x.utterance_id.ends_with("-0"));
            assert_eq!(tr.is_target, e.speaker_id == x.speaker_id);
            assert_eq!(c.speaker(&x.speaker_id).unwrap().gender, tr.gender);
        }
        // Pools hold 3 or 6 utterances, below 30.
        assert_eq!(t.drawn_with_replacement.len(), 5);
    }

    #[test]
    fn rejects_lonely_gender_and_single_utterances() {
        assert!(build_trials(&labelled(&[Gender::Male, Gender::Female], 3), 0, 30).is_err());
        assert!(build_trials(&labelled(&[Gender::Male, Gender::Male], 1), 0, 30).is_err());
    }
}
