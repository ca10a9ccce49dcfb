use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use amanda_core::dialogue::{
    handle_message, switch_language, DialogueError, DialogueState, IntentModel, KnowledgeBase, Phase, ReplyKind,
    Thresholds,
};
use amanda_core::nlu::Language;
use amanda_core::signal::{wav_to_bytes, AudioClip, GriffinLimConfig, SignalError};
use amanda_core::tts::{synthesize, TtsError, TtsModelParams, Vocab};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::records::{now_ms, ChatDoc, ChatRecord, Direction, LogModule, SecurityLogEntry, Severity};
use crate::store::{DocumentStore, StoreError};

pub const CHAT_COLLECTION: &str = "chat";
pub const SECURITY_COLLECTION: &str = "security";
pub const MAX_TEXT_CHARS: usize = 2000;
pub const MAX_SESSION_ID_LEN: usize = 128;
/// Replies longer than this are synthesized sentence by sentence.
pub const TTS_CHUNK_CHARS: usize = 200;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{0}")]
    Validation(String),
    #[error("payload too large: {0} characters")]
    TooLarge(usize),
    #[error("store: {0}")]
    Store(#[from] StoreError),
    #[error("dialogue: {0}")]
    Dialogue(#[from] DialogueError),
    #[error("tts: {0}")]
    Tts(#[from] TtsError),
    #[error("signal: {0}")]
    Signal(#[from] SignalError),
    #[error("stored document: {0}")]
    Document(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub session_id: String,
    pub text: String,
    #[serde(default)]
    pub language: Option<Language>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub reply_text: String,
    pub kind: ReplyKind,
    pub suggestions: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_url: Option<String>,
    pub state_phase: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub session_id: String,
    pub language: Language,
}

/// Trained TTS parameters plus vocoder settings.
pub struct TtsVoice {
    pub params: TtsModelParams,
    pub griffin_lim: GriffinLimConfig,
}

fn split_sentences(text: &str) -> Vec<String> {
    if text.chars().count() <= TTS_CHUNK_CHARS {
        return vec![text.to_string()];
    }
    let mut out = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        current.push(c);
        if matches!(c, '.' | '!' | '?') {
            out.push(std::mem::take(&mut current));
        }
    }
    out.push(current);
    out.retain(|s| !s.trim().is_empty());
    out
}

impl TtsVoice {
    /// Renders text to a clip; long text is synthesized per sentence and joined.
    pub fn render(&self, text: &str) -> Result<AudioClip, ServiceError> {
        let vocab = Vocab::default();
        let audio = &self.params.audio;
        let mut samples = Vec::new();
        for sentence in split_sentences(text) {
            let seq = vocab.encode(&sentence)?;
            let out = synthesize(&seq, &self.params, (10 * seq.len()).max(20))?;
            samples.extend(audio.vocode(&out.mel_after, self.griffin_lim)?.samples());
        }
        Ok(AudioClip::new(samples, audio.mel.sample_rate)?)
    }
}

/// Stable id of the audio for `text` spoken in `language`.
pub fn audio_id(text: &str, language: Language) -> String {
    let mut h = Sha256::new();
    h.update(language.code().as_bytes());
    h.update([0u8]);
    h.update(text.as_bytes());
    hex::encode(h.finalize())
}

fn valid_audio_id(id: &str) -> bool {
    id.len() == 64 && id.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase())
}

pub fn validate_session_id(id: &str) -> Result<(), ServiceError> {
    let ok = !id.is_empty()
        && id.len() <= MAX_SESSION_ID_LEN
        && id.bytes().all(|b| b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'.'));
    if ok {
        Ok(())
    } else {
        Err(ServiceError::Validation(format!("session_id must be 1-{MAX_SESSION_ID_LEN} characters of [A-Za-z0-9._-]")))
    }
}

fn phase_name(phase: &Phase) -> &'static str {
    match phase {
        Phase::Idle => "idle",
        Phase::AwaitingConfirmation { .. } => "awaiting_confirmation",
    }
}

struct Session {
    state: DialogueState,
    records: Vec<ChatRecord>,
}

impl Session {
    fn last_timestamp(&self) -> u64 {
        self.records.last().map_or(0, |r| r.timestamp)
    }
}

/// Runs NLU and dialogue per session and persists every turn.
pub struct ChatEngine {
    kb: KnowledgeBase,
    nlu: Arc<dyn IntentModel + Send + Sync>,
    thresholds: Thresholds,
    store: Arc<dyn DocumentStore>,
    tts: Option<TtsVoice>,
    audio_dir: PathBuf,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
}

impl ChatEngine {
    /// Rebuilds sessions from the store. `audio_dir` caches synthesized WAVs.
    pub fn new(
        kb: KnowledgeBase,
        nlu: Arc<dyn IntentModel + Send + Sync>,
        thresholds: Thresholds,
        store: Arc<dyn DocumentStore>,
        tts: Option<TtsVoice>,
        audio_dir: &Path,
    ) -> Result<Self, ServiceError> {
        thresholds.validate()?;
        let mut sessions: HashMap<String, Session> = HashMap::new();
        for doc in store.load(CHAT_COLLECTION)? {
            match serde_json::from_value::<ChatDoc>(doc)? {
                ChatDoc::Session { session_id, language, .. } => {
                    sessions
                        .entry(session_id.clone())
                        .or_insert_with(|| Session { state: DialogueState::new(session_id, language), records: Vec::new() });
                }
                ChatDoc::Turn { user, bot, state } => {
                    let s = sessions
                        .entry(state.session_id.clone())
                        .or_insert_with(|| Session { state: state.clone(), records: Vec::new() });
                    s.records.push(user);
                    s.records.push(bot);
                    s.state = state;
                }
            }
        }
        if tts.is_some() {
            std::fs::create_dir_all(audio_dir)?;
        }
        let sessions = sessions.into_iter().map(|(k, v)| (k, Arc::new(Mutex::new(v)))).collect();
        Ok(Self { kb, nlu, thresholds, store, tts, audio_dir: audio_dir.to_path_buf(), sessions: Mutex::new(sessions) })
    }

    pub fn tts_enabled(&self) -> bool {
        self.tts.is_some()
    }

    /// Appends a metadata-only security event; failures are only traced.
    pub fn log_security(&self, module: LogModule, severity: Severity, detail: impl Into<String>) {
        let entry = SecurityLogEntry { timestamp: now_ms(), module, severity, detail: detail.into() };
        let result = serde_json::to_value(&entry).map_err(StoreError::from).and_then(|v| self.store.append(SECURITY_COLLECTION, &v));
        if let Err(e) = result {
            tracing::error!("security log append failed: {e}");
        }
    }

    pub fn security_log(&self) -> Result<Vec<SecurityLogEntry>, ServiceError> {
        self.store.load(SECURITY_COLLECTION)?.into_iter().map(|v| Ok(serde_json::from_value(v)?)).collect()
    }

    fn session_slot(&self, id: &str) -> Option<Arc<Mutex<Session>>> {
        self.sessions.lock().unwrap_or_else(|p| p.into_inner()).get(id).cloned()
    }

    /// Registers a session; an existing id keeps its state. Returns the id.
    pub fn create_session(&self, id: Option<String>, language: Language) -> Result<SessionInfo, ServiceError> {
        let id = id.unwrap_or_else(|| uuid::Uuid::new_v4().to_string());
        validate_session_id(&id)?;
        let mut sessions = self.sessions.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(existing) = sessions.get(&id) {
            let s = existing.lock().unwrap_or_else(|p| p.into_inner());
            return Ok(SessionInfo { session_id: id, language: s.state.language });
        }
        let doc = ChatDoc::Session { session_id: id.clone(), language, created: now_ms() };
        self.store.append(CHAT_COLLECTION, &serde_json::to_value(&doc)?)?;
        let session = Session { state: DialogueState::new(id.clone(), language), records: Vec::new() };
        sessions.insert(id.clone(), Arc::new(Mutex::new(session)));
        drop(sessions);
        self.log_security(LogModule::Api, Severity::Info, "session created");
        Ok(SessionInfo { session_id: id, language })
    }

    /// One user turn: NLU, dialogue, optional speech, then a single durable
    /// append holding both records. Unknown sessions are created on demand.
    pub fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, ServiceError> {
        validate_session_id(&req.session_id)?;
        let chars = req.text.chars().count();
        if chars > MAX_TEXT_CHARS {
            self.log_security(LogModule::Api, Severity::Warn, format!("oversized message rejected: {chars} characters"));
            return Err(ServiceError::TooLarge(chars));
        }
        let slot = match self.session_slot(&req.session_id) {
            Some(s) => s,
            None => {
                self.create_session(Some(req.session_id.clone()), req.language.unwrap_or(Language::En))?;
                self.session_slot(&req.session_id).expect("just created")
            }
        };
        let mut session = slot.lock().unwrap_or_else(|p| p.into_inner());
        let mut state = session.state.clone();
        if let Some(lang) = req.language {
            if lang != state.language {
                state = switch_language(&state, lang);
            }
        }
        let (next, reply) = handle_message(&state, &req.text, self.nlu.as_ref(), &self.kb, &self.thresholds)?;
        if reply.kind == ReplyKind::Handoff {
            self.log_security(LogModule::Dialogue, Severity::Info, "handoff to professional advice");
        }
        let audio_ref = self.speak(&reply.text, next.language);
        let user_ts = now_ms().max(session.last_timestamp());
        let user = ChatRecord {
            session_id: req.session_id.clone(),
            timestamp: user_ts,
            direction: Direction::User,
            text: req.text.clone(),
            language: state.language,
            reply_kind: None,
            audio_ref: None,
        };
        let bot = ChatRecord {
            session_id: req.session_id.clone(),
            timestamp: now_ms().max(user_ts),
            direction: Direction::Bot,
            text: reply.text.clone(),
            language: next.language,
            reply_kind: Some(reply.kind),
            audio_ref: audio_ref.clone(),
        };
        let doc = ChatDoc::Turn { user: user.clone(), bot: bot.clone(), state: next.clone() };
        self.store.append(CHAT_COLLECTION, &serde_json::to_value(&doc)?)?;
        session.records.push(user);
        session.records.push(bot);
        session.state = next;
        Ok(ChatResponse {
            reply_text: reply.text,
            kind: reply.kind,
            suggestions: reply.suggestions,
            audio_url: audio_ref.map(|id| format!("/api/audio/{id}")),
            state_phase: phase_name(&session.state.phase).into(),
            intent: reply.intent,
        })
    }

    /// Synthesizes (or reuses) the WAV for a reply. The character model only
    /// covers Latin script, so other languages get no audio.
    fn speak(&self, text: &str, language: Language) -> Option<String> {
        let voice = self.tts.as_ref()?;
        if language != Language::En {
            return None;
        }
        let id = audio_id(text, language);
        let path = self.audio_dir.join(format!("{id}.wav"));
        if path.is_file() {
            return Some(id);
        }
        let result = voice.render(text).and_then(|clip| {
            let bytes = wav_to_bytes(&clip)?;
            let tmp = self.audio_dir.join(format!("{id}.{}.tmp", uuid::Uuid::new_v4()));
            std::fs::write(&tmp, bytes)?;
            std::fs::rename(&tmp, &path)?;
            Ok(())
        });
        match result {
            Ok(()) => Some(id),
            Err(e) => {
                tracing::error!("synthesis failed: {e}");
                self.log_security(LogModule::Tts, Severity::Error, "synthesis failed");
                None
            }
        }
    }

    pub fn history(&self, session_id: &str) -> Option<Vec<ChatRecord>> {
        let slot = self.session_slot(session_id)?;
        let records = slot.lock().unwrap_or_else(|p| p.into_inner()).records.clone();
        Some(records)
    }

    pub fn session_state(&self, session_id: &str) -> Option<DialogueState> {
        let slot = self.session_slot(session_id)?;
        let state = slot.lock().unwrap_or_else(|p| p.into_inner()).state.clone();
        Some(state)
    }

    /// Cached WAV bytes for an audio id.
    pub fn audio(&self, id: &str) -> Result<Option<Vec<u8>>, ServiceError> {
        if self.tts.is_none() || !valid_audio_id(id) {
            return Ok(None);
        }
        match std::fs::read(self.audio_dir.join(format!("{id}.wav"))) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }
}
