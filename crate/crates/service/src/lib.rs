//! Chat and speech service over the `amanda-core` engine.

pub mod config;
pub mod engine;
pub mod http;
pub mod records;
pub mod store;

pub use config::{ConfigError, ServiceConfig, CONFIG_ENV};
pub use engine::{ChatEngine, ChatRequest, ChatResponse, ServiceError, SessionInfo, TtsVoice};
pub use records::{ChatRecord, Direction, LogModule, SecurityLogEntry, Severity};
pub use store::{DocumentStore, FileStore, MemoryStore, StoreError};
