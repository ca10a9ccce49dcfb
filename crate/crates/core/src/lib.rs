pub mod dialogue;
pub mod evaluation;
pub mod nlu;
pub mod nn;
pub mod signal;
pub mod tts;
