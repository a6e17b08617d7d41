//! Waveforms, WAV I/O, log-mel features and the synthetic corpus.

mod corpus;
mod features;
mod synth;
mod waveform;
mod wav;

pub use corpus::{read_manifest, write_manifest, Corpus, Gender, ManifestEntry, Speaker, Split};
pub use features::{log_mel_filterbank, FeatureMatrix, LogMel, LogMelCache, LOG_FLOOR};
pub use synth::{synth_corpus, SpeakerVoice};
pub use waveform::{Waveform, SAMPLE_RATE};
pub use wav::{load_wav, save_wav};
