use serde::{Deserialize, Serialize};

use super::kb::{suggest_related, KnowledgeBase};
use super::DialogueError;
use crate::nlu::{IntentClassifier, IntentPrediction, Language, NluError, Topic};

/// Payloads sent by explicit yes/no buttons.
pub const YES_PAYLOAD: &str = "/yes";
pub const NO_PAYLOAD: &str = "/no";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum Phase {
    #[default]
    Idle,
    AwaitingConfirmation { intent: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueState {
    pub session_id: String,
    pub language: Language,
    pub phase: Phase,
    pub turn_count: u64,
}

impl DialogueState {
    pub fn new(session_id: impl Into<String>, language: Language) -> Self {
        Self { session_id: session_id.into(), language, phase: Phase::Idle, turn_count: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReplyKind {
    Answer,
    Confirmation,
    Clarification,
    Handoff,
    SmallTalk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BotReply {
    pub text: String,
    pub kind: ReplyKind,
    pub suggestions: Vec<String>,
    pub audio_ref: Option<String>,
    /// Intent the reply is about, when there is one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub direct: f64,
    pub confirm: f64,
}

impl Default for Thresholds {
    /// `direct` above 1 means every answer is confirmed first.
    fn default() -> Self {
        Self { direct: 1.01, confirm: 0.35 }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), DialogueError> {
        if !(0.0 <= self.confirm && self.confirm <= self.direct) {
            return Err(DialogueError::Thresholds { confirm: self.confirm, direct: self.direct });
        }
        Ok(())
    }
}

/// Anything that can rank intents for an utterance.
pub trait IntentModel {
    fn predict(&self, text: &str, language: Language) -> Result<IntentPrediction, NluError>;
    fn topic(&self, intent_id: &str) -> Option<Topic>;
}

impl IntentModel for IntentClassifier {
    fn predict(&self, text: &str, language: Language) -> Result<IntentPrediction, NluError> {
        IntentClassifier::predict(self, text, language)
    }

    fn topic(&self, intent_id: &str) -> Option<Topic> {
        self.label(intent_id).map(|l| l.topic)
    }
}

fn normalize(text: &str) -> String {
    text.trim()
        .trim_end_matches(|c: char| c.is_ascii_punctuation() || "。！？，～".contains(c))
        .to_lowercase()
}

const YES_EN: &[&str] = &["yes", "y", "yeah", "yep", "yup", "ok", "okay", "correct", "right", "sure", "that's right", "yes please"];
const NO_EN: &[&str] = &["no", "n", "nope", "nah", "wrong", "incorrect", "not really", "no thanks", "that's wrong"];
const YES_ZH: &[&str] = &["是", "是的", "对", "对的", "好", "好的", "没错", "嗯", "正确"];
const NO_ZH: &[&str] = &["不", "不是", "不对", "错", "错了", "没有", "不是的"];

/// Both lexicons apply in either session language.
fn lexicon_match(text: &str, en: &[&str], zh: &[&str], payload: &str) -> bool {
    let t = normalize(text);
    t == payload || en.contains(&t.as_str()) || zh.contains(&t.as_str())
}

pub fn is_affirmative(text: &str) -> bool {
    lexicon_match(text, YES_EN, YES_ZH, YES_PAYLOAD)
}

pub fn is_negative(text: &str) -> bool {
    lexicon_match(text, NO_EN, NO_ZH, NO_PAYLOAD)
}

fn confirm_text(question: &str, lang: Language) -> String {
    match lang {
        Language::En => format!("Do you mean: \"{question}\"? Please answer yes or no."),
        Language::Zh => format!("您是想问：“{question}”吗？请回答是或不是。"),
    }
}

pub fn handoff_text(lang: Language) -> &'static str {
    match lang {
        Language::En => "I'm sorry, I am not able to answer that. Please consult your nurse or a doctor for professional advice.",
        Language::Zh => "抱歉，我无法回答这个问题。请咨询您的护士或医生，以获得专业建议。",
    }
}

fn rephrase_text(lang: Language) -> &'static str {
    match lang {
        Language::En => "Sorry about that. Could you please rephrase your question?",
        Language::Zh => "抱歉。请您换一种说法再问一次好吗？",
    }
}

fn empty_text(lang: Language) -> &'static str {
    match lang {
        Language::En => "I did not receive any text. Please type your question.",
        Language::Zh => "我没有收到任何内容，请输入您的问题。",
    }
}

fn reply(text: impl Into<String>, kind: ReplyKind, intent: Option<&str>) -> BotReply {
    BotReply { text: text.into(), kind, suggestions: Vec::new(), audio_ref: None, intent: intent.map(str::to_string) }
}

fn answer(intent: &str, kb: &KnowledgeBase, lang: Language) -> BotReply {
    match kb.answer(intent, lang) {
        Some(text) => BotReply { suggestions: suggest_related(intent, kb, lang), ..reply(text, ReplyKind::Answer, Some(intent)) },
        None => reply(handoff_text(lang), ReplyKind::Handoff, Some(intent)),
    }
}

/// Advances the fail-safe dialogue by one user turn.
///
/// | phase | input | reply | next phase |
/// |---|---|---|---|
/// | awaiting(i) | affirmative | Answer(i) + suggestions | idle |
/// | awaiting(i) | negative | Clarification (rephrase) | idle |
/// | idle | out of scope, or confidence < confirm | Handoff | idle |
/// | idle | small talk | SmallTalk | idle |
/// | idle | confidence ≥ direct | Answer + suggestions | idle |
/// | idle | confirm ≤ confidence < direct | Confirmation | awaiting(top) |
/// | any | empty | Clarification | unchanged |
///
/// Any other input while awaiting confirmation is treated as a new query.
pub fn handle_message(
    state: &DialogueState,
    text: &str,
    nlu: &dyn IntentModel,
    kb: &KnowledgeBase,
    thresholds: &Thresholds,
) -> Result<(DialogueState, BotReply), DialogueError> {
    thresholds.validate()?;
    let lang = state.language;
    let mut next = state.clone();
    next.turn_count += 1;
    if text.trim().is_empty() {
        return Ok((next, reply(empty_text(lang), ReplyKind::Clarification, None)));
    }
    if let Phase::AwaitingConfirmation { intent } = &state.phase {
        if is_affirmative(text) {
            next.phase = Phase::Idle;
            return Ok((next, answer(intent, kb, lang)));
        }
        if is_negative(text) {
            next.phase = Phase::Idle;
            return Ok((next, reply(rephrase_text(lang), ReplyKind::Clarification, None)));
        }
    }
    next.phase = Phase::Idle;
    let prediction = match nlu.predict(text, lang) {
        Ok(p) => p,
        Err(NluError::EmptyInput) => return Ok((next, reply(empty_text(lang), ReplyKind::Clarification, None))),
        Err(e) => return Err(e.into()),
    };
    let (top, confidence) = prediction.top();
    let topic = kb.get(top).map(|e| e.topic).or_else(|| nlu.topic(top)).unwrap_or(Topic::OutOfScope);
    if topic == Topic::OutOfScope || confidence < thresholds.confirm {
        return Ok((next, reply(handoff_text(lang), ReplyKind::Handoff, None)));
    }
    if topic == Topic::SmallTalk {
        let text = kb.answer(top, lang).unwrap_or(match lang {
            Language::En => "Hello! Ask me anything about managing diabetes.",
            Language::Zh => "您好！欢迎问我任何关于糖尿病管理的问题。",
        });
        return Ok((next, reply(text, ReplyKind::SmallTalk, Some(top))));
    }
    let Some(question) = kb.question(top, lang) else {
        return Ok((next, reply(handoff_text(lang), ReplyKind::Handoff, None)));
    };
    if confidence >= thresholds.direct {
        return Ok((next, answer(top, kb, lang)));
    }
    next.phase = Phase::AwaitingConfirmation { intent: top.to_string() };
    Ok((next, reply(confirm_text(question, lang), ReplyKind::Confirmation, Some(top))))
}

/// Changes only the session language.
pub fn switch_language(state: &DialogueState, language: Language) -> DialogueState {
    DialogueState { language, ..state.clone() }
}
