use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::AudioSettings;
use super::vocab::{TextSequence, Vocab};
use super::TtsError;
use crate::signal::{melspectrogram, read_wav, AudioClip, MelFilterbank, MelSpectrogram};

/// `id|transcript` per line; audio lives in `<id>.wav` next to it or
/// under `wavs/`.
pub const METADATA_FILE: &str = "metadata.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub id: String,
    pub text: TextSequence,
    pub mel: MelSpectrogram,
}

pub fn mel_target(audio: &AudioClip, settings: &AudioSettings) -> Result<MelSpectrogram, TtsError> {
    if audio.sample_rate() != settings.mel.sample_rate {
        return Err(TtsError::Corpus(format!(
            "audio at {} Hz, model expects {} Hz",
            audio.sample_rate(),
            settings.mel.sample_rate
        )));
    }
    let bank = MelFilterbank::from_config(settings.stft.n_fft, &settings.mel)?;
    Ok(melspectrogram(audio, &settings.stft, &bank, settings.log_floor)?)
}

pub fn load_corpus_dir(dir: &Path, settings: &AudioSettings, vocab: &Vocab) -> Result<Vec<TrainingPair>, TtsError> {
    let meta = dir.join(METADATA_FILE);
    let text = std::fs::read_to_string(&meta)
        .map_err(|e| TtsError::Corpus(format!("{}: {e}", meta.display())))?;
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, transcript) = line
            .split_once('|')
            .ok_or_else(|| TtsError::Corpus(format!("{}:{}: expected id|transcript", meta.display(), n + 1)))?;
        let id = id.trim();
        let wav = [dir.join(format!("{id}.wav")), dir.join("wavs").join(format!("{id}.wav"))]
            .into_iter()
            .find(|p| p.exists())
            .ok_or_else(|| TtsError::Corpus(format!("no audio for {id}")))?;
        let audio = read_wav(&wav)?;
        pairs.push(TrainingPair { id: id.to_string(), text: vocab.encode(transcript)?, mel: mel_target(&audio, settings)? });
    }
    if pairs.is_empty() {
        return Err(TtsError::Corpus(format!("{} lists no utterances", meta.display())));
    }
    Ok(pairs)
}

/// Seeded shuffle, then the first `train_fraction` (rounded) for training
/// and the rest held out. Both parts are non-empty when `items.len() ≥ 2`.
pub fn split_corpus<T: Clone>(items: &[T], seed: u64, train_fraction: f64) -> (Vec<T>, Vec<T>) {
    let mut shuffled = items.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut n_train = (items.len() as f64 * train_fraction.clamp(0.0, 1.0)).round() as usize;
    if items.len() >= 2 {
        n_train = n_train.clamp(1, items.len() - 1);
    }
    let test = shuffled.split_off(n_train.min(shuffled.len()));
    (shuffled, test)
}
