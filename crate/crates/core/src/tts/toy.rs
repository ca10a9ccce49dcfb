//! Synthetic copy task: each symbol expands to a fixed block of frames, so
//! a correct alignment is monotonic and known in advance.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::corpus::TrainingPair;
use super::model::synthesize;
use super::params::{AudioSettings, TtsConfig, TtsModelParams};
use super::train::{batch_loss, TrainConfig, Trainer};
use super::vocab::Vocab;
use super::TtsError;
use crate::nn::LrSchedule;
use crate::signal::{MelConfig, MelSpectrogram};

#[derive(Debug, Clone, PartialEq)]
pub struct ToyCorpus {
    pub frames_per_symbol: usize,
    pub n_mels: usize,
    letters: Vec<char>,
    patterns: Vec<Vec<Vec<f64>>>,
}

impl ToyCorpus {
    pub fn new(n_symbols: usize, frames_per_symbol: usize, n_mels: usize, seed: u64) -> Result<Self, TtsError> {
        if !(1..=26).contains(&n_symbols) || frames_per_symbol == 0 || n_mels == 0 {
            return Err(TtsError::Config("toy corpus needs 1..=26 symbols and positive sizes".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let patterns = (0..n_symbols)
            .map(|_| (0..frames_per_symbol).map(|_| (0..n_mels).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect())
            .collect();
        Ok(Self { frames_per_symbol, n_mels, letters: ('a'..='z').take(n_symbols).collect(), patterns })
    }

    pub fn n_symbols(&self) -> usize {
        self.letters.len()
    }

    /// Target frames for a symbol sequence given by symbol index.
    pub fn pair(&self, symbols: &[usize]) -> Result<TrainingPair, TtsError> {
        if symbols.iter().any(|&s| s >= self.n_symbols()) {
            return Err(TtsError::Config("symbol outside toy alphabet".into()));
        }
        let text: String = symbols.iter().map(|&s| self.letters[s]).collect();
        let frames = symbols.iter().flat_map(|&s| self.patterns[s].iter().cloned()).collect();
        Ok(TrainingPair { id: text.clone(), text: Vocab::default().encode(&text)?, mel: MelSpectrogram::new(frames, self.n_mels)? })
    }

    /// `count` sequences of distinct symbols with lengths in `min_len..=max_len`.
    pub fn generate(&self, count: usize, min_len: usize, max_len: usize, seed: u64) -> Result<Vec<TrainingPair>, TtsError> {
        if min_len == 0 || min_len > max_len || max_len > self.n_symbols() {
            return Err(TtsError::Config(format!("lengths {min_len}..={max_len} invalid for {} symbols", self.n_symbols())));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let all: Vec<usize> = (0..self.n_symbols()).collect();
        (0..count)
            .map(|_| {
                let len = rng.gen_range(min_len..=max_len);
                let picked: Vec<usize> = all.choose_multiple(&mut rng, len).copied().collect();
                self.pair(&picked)
            })
            .collect()
    }
}

/// A complete seeded copy-task experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyRecipe {
    pub corpus: ToyCorpus,
    pub corpus_size: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub model: TtsConfig,
    pub train: TrainConfig,
    pub steps: usize,
    pub seed: u64,
    /// Utterances used to measure loss and alignment.
    pub eval_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyReport {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub diagonal_mass: f64,
}

impl ToyReport {
    pub fn loss_reduction(&self) -> f64 {
        1.0 - self.final_loss / self.initial_loss
    }
}

impl ToyRecipe {
    /// 8 symbols × 4 frames, 8 mel bands, 32-wide layers.
    pub fn standard(seed: u64) -> Self {
        let d = 32;
        let n_mels = 8;
        Self {
            corpus: ToyCorpus::new(8, 4, n_mels, seed.wrapping_add(11)).expect("static sizes"),
            corpus_size: 200,
            min_len: 3,
            max_len: 6,
            model: TtsConfig { d_emb: d, d_enc: d, d_dec: d, d_att: d, n_mels, postnet_channels: d, postnet_kernel: 5, ..Default::default() },
            train: TrainConfig {
                batch_size: 8,
                frame_dropout: 0.7,
                schedule: LrSchedule::default().with_initial_lr(1e-2),
                seed,
                ..Default::default()
            },
            steps: 2000,
            seed,
            eval_size: 32,
        }
    }

    /// Audio settings whose mel band count matches the toy model.
    pub fn audio(&self) -> AudioSettings {
        let mut a = AudioSettings::default();
        a.mel = MelConfig { n_mels: self.model.n_mels, ..a.mel };
        a
    }

    pub fn data(&self) -> Result<Vec<TrainingPair>, TtsError> {
        self.corpus.generate(self.corpus_size, self.min_len, self.max_len, self.seed.wrapping_add(12))
    }

    pub fn init_params(&self) -> Result<TtsModelParams, TtsError> {
        TtsModelParams::init(self.model, self.audio(), self.seed.wrapping_add(7))
    }

    /// Trains from scratch, calling `progress(step, loss)` after each update.
    pub fn run(&self, mut progress: impl FnMut(usize, f64)) -> Result<(TtsModelParams, ToyReport), TtsError> {
        let data = self.data()?;
        let eval: Vec<&TrainingPair> = data.iter().take(self.eval_size).collect();
        let params = self.init_params()?;
        let initial_loss = batch_loss(&params, &eval, self.train.lambda)?.total;
        let mut trainer = Trainer::new(params, self.train)?;
        for step in 0..self.steps {
            let batch = trainer.sample_batch(&data);
            let loss = trainer.train_step(&batch)?;
            progress(step + 1, loss.total);
        }
        let params = trainer.params;
        let final_loss = batch_loss(&params, &eval, self.train.lambda)?.total;
        let diagonal_mass = alignment_score(&params, &eval)?;
        Ok((params, ToyReport { initial_loss, final_loss, diagonal_mass }))
    }
}

/// Mean diagonal mass (band 0.2) of free-running synthesis alignments, with
/// the frame cap at twice each target length.
pub fn alignment_score(params: &TtsModelParams, pairs: &[&TrainingPair]) -> Result<f64, TtsError> {
    let mut total = 0.0;
    for p in pairs {
        let out = synthesize(&p.text, params, 2 * p.mel.n_frames())?;
        total += out.attention.diagonal_mass(0.2);
    }
    Ok(total / pairs.len().max(1) as f64)
}
