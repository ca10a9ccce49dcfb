//! FAQ knowledge base and the fail-safe dialogue state machine.

mod fsm;
mod kb;

pub use fsm::{
    handle_message, handoff_text, is_affirmative, is_negative, switch_language, BotReply, DialogueState, IntentModel,
    Phase, ReplyKind, Thresholds, NO_PAYLOAD, YES_PAYLOAD,
};
pub use kb::{
    bundled_kb, load_kb, suggest_related, validate_kb, FaqEntry, KbReport, KbViolation, KnowledgeBase, DEMO_DISCLAIMER,
    MAX_RELATED,
};

use thiserror::Error;

use crate::nlu::NluError;

#[derive(Debug, Error)]
pub enum DialogueError {
    #[error("knowledge base parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("thresholds must satisfy 0 ≤ confirm ({confirm}) ≤ direct ({direct})")]
    Thresholds { confirm: f64, direct: f64 },
    #[error(transparent)]
    Nlu(#[from] NluError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
