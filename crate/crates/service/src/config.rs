use std::path::{Path, PathBuf};

use amanda_core::dialogue::Thresholds;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable naming the config file.
pub const CONFIG_ENV: &str = "AMANDA_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("no config given and {CONFIG_ENV} is unset")]
    Missing,
    #[error("{0}")]
    Invalid(String),
}

fn default_bind() -> String {
    "127.0.0.1".into()
}

fn default_port() -> u16 {
    8080
}

fn default_gl_iterations() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_bind")]
    pub bind: String,
    #[serde(default = "default_port")]
    pub port: u16,
    /// Knowledge base JSON; the bundled demo KB when absent.
    #[serde(default)]
    pub kb_path: Option<PathBuf>,
    /// Trained NLU model; trained from the bundled corpus at startup when absent.
    #[serde(default)]
    pub nlu_model_path: Option<PathBuf>,
    #[serde(default)]
    pub tts_checkpoint_path: Option<PathBuf>,
    #[serde(default)]
    pub thresholds: Thresholds,
    pub store_dir: PathBuf,
    #[serde(default)]
    pub tts_enabled: bool,
    /// Built web UI served at `/`.
    #[serde(default)]
    pub static_dir: Option<PathBuf>,
    #[serde(default = "default_gl_iterations")]
    pub griffin_lim_iterations: usize,
}

impl ServiceConfig {
    pub fn new(store_dir: impl Into<PathBuf>) -> Self {
        Self {
            bind: default_bind(),
            port: default_port(),
            kb_path: None,
            nlu_model_path: None,
            tts_checkpoint_path: None,
            thresholds: Thresholds::default(),
            store_dir: store_dir.into(),
            tts_enabled: false,
            static_dir: None,
            griffin_lim_iterations: default_gl_iterations(),
        }
    }

    /// Reads a JSON config; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|source| ConfigError::Parse { path: path.into(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.store_dir);
        for p in [&mut cfg.kb_path, &mut cfg.nlu_model_path, &mut cfg.tts_checkpoint_path, &mut cfg.static_dir].into_iter().flatten() {
            fix(p);
        }
        Ok(cfg)
    }

    /// `path` if given, else the file named by `AMANDA_CONFIG`.
    pub fn locate(path: Option<&Path>) -> Result<Self, ConfigError> {
        match path {
            Some(p) => Self::load(p),
            None => std::env::var_os(CONFIG_ENV).map(PathBuf::from).ok_or(ConfigError::Missing).and_then(|p| Self::load(&p)),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.thresholds.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let files = [("kb_path", &self.kb_path), ("nlu_model_path", &self.nlu_model_path), ("tts_checkpoint_path", &self.tts_checkpoint_path)];
        for (name, path) in files {
            if let Some(p) = path {
                if !p.is_file() {
                    return Err(ConfigError::Invalid(format!("{name}: {} does not exist", p.display())));
                }
            }
        }
        if let Some(p) = &self.static_dir {
            if !p.is_dir() {
                return Err(ConfigError::Invalid(format!("static_dir: {} is not a directory", p.display())));
            }
        }
        if self.tts_enabled && self.tts_checkpoint_path.is_none() {
            return Err(ConfigError::Invalid("tts_enabled requires tts_checkpoint_path".into()));
        }
        if self.tts_enabled && self.griffin_lim_iterations == 0 {
            return Err(ConfigError::Invalid("griffin_lim_iterations must be positive".into()));
        }
        Ok(())
    }
}
