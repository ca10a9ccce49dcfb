//! Intent classification for English and Simplified Chinese input.

mod classifier;
mod text;

pub use classifier::{
    extract_numbers, load_corpus, parse_corpus, IntentClassifier, IntentLabel, IntentPrediction, NluTrainConfig,
    NumericEntity, Topic, TrainingExample,
};
pub use text::{featurize, tokenize, Language, SparseFeatures, FEATURE_DIM};

use thiserror::Error;

use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum NluError {
    #[error("empty input")]
    EmptyInput,
    #[error("need at least 2 distinct intents, corpus has {0}")]
    TooFewIntents(usize),
    #[error("corpus: {0}")]
    Corpus(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Demonstration training corpus (en + zh) matching the bundled KB.
pub fn bundled_corpus() -> Vec<TrainingExample> {
    parse_corpus(include_str!("../../data/nlu_corpus.json")).expect("bundled corpus is valid")
}

/// Paraphrases of the bundled corpus that are not used for training.
pub fn bundled_heldout() -> Vec<TrainingExample> {
    parse_corpus(include_str!("../../data/nlu_heldout.json")).expect("bundled held-out set is valid")
}

/// Three intents whose keyword vocabularies do not overlap: `(train, held_out)`.
pub fn disjoint_fixture() -> (Vec<TrainingExample>, Vec<TrainingExample>) {
    #[derive(serde::Deserialize)]
    struct Fixture {
        train: Vec<TrainingExample>,
        heldout: Vec<TrainingExample>,
    }
    let f: Fixture = serde_json::from_str(include_str!("../../data/disjoint_intents.json")).expect("bundled fixture is valid");
    (f.train, f.heldout)
}
