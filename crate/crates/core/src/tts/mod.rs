//! Bidirectional-decoder sequence-to-sequence acoustic model.

mod corpus;
mod loss;
mod model;
mod params;
mod toy;
mod train;
mod vocab;

pub use corpus::{load_corpus_dir, mel_target, split_corpus, TrainingPair, METADATA_FILE};
pub use loss::{compute_loss, DecoderRun, TtsLoss};
pub use model::{
    attend, attention_from_energies, decode_step, encode, postnet, synthesize, AttentionRecord, DecoderState,
    Direction, EncoderOutputs, StepOutput, SynthesisOutput,
};
pub use params::{AudioSettings, TtsConfig, TtsModelParams};
pub use toy::{alignment_score, ToyCorpus, ToyRecipe, ToyReport};
pub use train::{batch_gradients, batch_loss, teacher_forced, Objective, TeacherForced, TrainConfig, Trainer};
pub use vocab::{TextSequence, Vocab, PAD, UNK};

use thiserror::Error;

use crate::nn::NnError;
use crate::signal::SignalError;

#[derive(Debug, Error)]
pub enum TtsError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error("text is empty after normalization")]
    EmptyText,
    #[error("symbol id {id} outside vocabulary of {vocab_size}")]
    InvalidId { id: usize, vocab_size: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("non-finite loss at step {step}: {detail}")]
    NonFinite { step: u64, detail: String },
    #[error("corpus: {0}")]
    Corpus(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
