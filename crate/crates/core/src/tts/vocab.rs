use serde::{Deserialize, Serialize};

use super::TtsError;

pub const PAD: usize = 0;
pub const UNK: usize = 1;

const SYMBOLS: &str = " '.,?!-:;abcdefghijklmnopqrstuvwxyz0123456789";

/// Character inventory: padding, unknown, then printable symbols.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    symbols: Vec<char>,
}

impl Default for Vocab {
    fn default() -> Self {
        Self { symbols: SYMBOLS.chars().collect() }
    }
}

impl Vocab {
    pub fn len(&self) -> usize {
        self.symbols.len() + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, c: char) -> usize {
        let c = c.to_ascii_lowercase();
        self.symbols.iter().position(|&s| s == c).map_or(UNK, |p| p + 2)
    }

    pub fn symbol(&self, id: usize) -> Option<char> {
        id.checked_sub(2).and_then(|i| self.symbols.get(i).copied())
    }

    /// Lowercases, collapses whitespace and maps characters to ids.
    pub fn encode(&self, text: &str) -> Result<TextSequence, TtsError> {
        let normalized = text.split_whitespace().collect::<Vec<_>>().join(" ");
        TextSequence::new(normalized.chars().map(|c| self.id(c)).collect(), self.len())
    }
}

/// Character-id sequence `x_1 … x_{T_x}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextSequence {
    ids: Vec<usize>,
}

impl TextSequence {
    pub fn new(ids: Vec<usize>, vocab_size: usize) -> Result<Self, TtsError> {
        if ids.is_empty() {
            return Err(TtsError::EmptyText);
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= vocab_size) {
            return Err(TtsError::InvalidId { id: bad, vocab_size });
        }
        Ok(Self { ids })
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// First `n` symbols.
    pub fn prefix(&self, n: usize) -> Option<Self> {
        (n >= 1 && n <= self.ids.len()).then(|| Self { ids: self.ids[..n].to_vec() })
    }
}
