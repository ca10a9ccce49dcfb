use std::hash::Hasher;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

/// Feature space size for hashed n-grams.
pub const FEATURE_DIM: usize = 1 << 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    #[default]
    En,
    Zh,
}

impl Language {
    pub fn code(self) -> &'static str {
        match self {
            Language::En => "en",
            Language::Zh => "zh",
        }
    }
}

impl std::str::FromStr for Language {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "en" => Ok(Language::En),
            "zh" => Ok(Language::Zh),
            other => Err(format!("unknown language {other:?} (expected en or zh)")),
        }
    }
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32, 0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xF900..=0xFAFF | 0x20000..=0x2FA1F)
}

/// English: lowercase, drop apostrophes, split on anything that is not
/// alphanumeric. Chinese: one token per CJK character; embedded Latin or
/// digit runs stay whole words.
pub fn tokenize(text: &str, language: Language) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    let flush = |word: &mut String, tokens: &mut Vec<String>| {
        if !word.is_empty() {
            tokens.push(std::mem::take(word));
        }
    };
    for c in text.chars() {
        if language == Language::Zh && is_cjk(c) {
            flush(&mut word, &mut tokens);
            tokens.push(c.to_string());
        } else if c.is_alphanumeric() {
            word.extend(c.to_lowercase());
        } else if c == '\'' || c == '’' {
            continue;
        } else {
            flush(&mut word, &mut tokens);
        }
    }
    flush(&mut word, &mut tokens);
    tokens
}

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseFeatures {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseFeatures {
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

fn bucket(kind: u8, parts: &[&str]) -> usize {
    let mut h = FnvHasher::default();
    h.write_u8(kind);
    for p in parts {
        h.write(p.as_bytes());
        h.write_u8(0);
    }
    (h.finish() % FEATURE_DIM as u64) as usize
}

/// Hashed counts of unigrams and adjacent bigrams, L2-normalized.
pub fn featurize(tokens: &[String]) -> SparseFeatures {
    let mut counts = std::collections::BTreeMap::<usize, f64>::new();
    for t in tokens {
        *counts.entry(bucket(1, &[t])).or_default() += 1.0;
    }
    for w in tokens.windows(2) {
        *counts.entry(bucket(2, &[&w[0], &w[1]])).or_default() += 1.0;
    }
    let norm = counts.values().map(|v| v * v).sum::<f64>().sqrt();
    let (indices, values) = counts.into_iter().map(|(i, v)| (i, v / norm)).unzip();
    SparseFeatures { indices, values }
}
