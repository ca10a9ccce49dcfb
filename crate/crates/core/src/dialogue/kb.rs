use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DialogueError;
use crate::nlu::{Language, Topic};

pub const MAX_RELATED: usize = 3;

/// Shown wherever the bundled knowledge base is served.
pub const DEMO_DISCLAIMER: &str = "Demonstration content only: the bundled answers are general diabetes \
education written for this software and have not been reviewed or approved by any hospital or clinician. \
Always follow the advice of your own care team.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaqEntry {
    pub intent_id: String,
    pub topic: Topic,
    pub question: BTreeMap<Language, String>,
    pub answer: BTreeMap<Language, String>,
    #[serde(default)]
    pub related: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeBase {
    entries: Vec<FaqEntry>,
    index: HashMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct KbViolation {
    pub intent_id: String,
    pub problem: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct KbReport {
    pub entries: usize,
    pub violations: Vec<KbViolation>,
}

impl KbReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for KbReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{} entries, {} violation(s)", self.entries, self.violations.len())?;
        for v in &self.violations {
            writeln!(f, "  {}: {}", v.intent_id, v.problem)?;
        }
        Ok(())
    }
}

impl KnowledgeBase {
    pub fn new(entries: Vec<FaqEntry>) -> Self {
        // first occurrence wins; duplicates are reported by validate
        let mut index = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            index.entry(e.intent_id.clone()).or_insert(i);
        }
        Self { entries, index }
    }

    pub fn parse(json: &str) -> Result<Self, DialogueError> {
        let entries: Vec<FaqEntry> = serde_json::from_str(json)
            .map_err(|e| DialogueError::Parse { line: e.line(), column: e.column(), message: e.to_string() })?;
        Ok(Self::new(entries))
    }

    pub fn entries(&self) -> &[FaqEntry] {
        &self.entries
    }

    pub fn get(&self, intent_id: &str) -> Option<&FaqEntry> {
        self.index.get(intent_id).map(|&i| &self.entries[i])
    }

    pub fn question(&self, intent_id: &str, lang: Language) -> Option<&str> {
        self.get(intent_id).and_then(|e| e.question.get(&lang)).map(String::as_str)
    }

    pub fn answer(&self, intent_id: &str, lang: Language) -> Option<&str> {
        self.get(intent_id).and_then(|e| e.answer.get(&lang)).map(String::as_str)
    }
}

pub fn load_kb(path: &Path) -> Result<KnowledgeBase, DialogueError> {
    KnowledgeBase::parse(&std::fs::read_to_string(path)?)
}

/// The demonstration knowledge base shipped with the crate.
pub fn bundled_kb() -> KnowledgeBase {
    KnowledgeBase::parse(include_str!("../../data/kb.json")).expect("bundled kb is valid")
}

pub fn validate_kb(kb: &KnowledgeBase) -> KbReport {
    let mut violations = Vec::new();
    let mut flag = |id: &str, problem: String| violations.push(KbViolation { intent_id: id.to_string(), problem });
    let mut seen = HashSet::new();
    for e in kb.entries() {
        let id = e.intent_id.as_str();
        if id.trim().is_empty() {
            flag(id, "empty intent id".into());
        }
        if !seen.insert(id) {
            flag(id, "duplicate intent id".into());
        }
        for lang in [Language::En, Language::Zh] {
            for (field, map) in [("question", &e.question), ("answer", &e.answer)] {
                if map.get(&lang).is_none_or(|t| t.trim().is_empty()) {
                    flag(id, format!("missing {} {field}", lang.code()));
                }
            }
        }
        if e.related.len() > MAX_RELATED {
            flag(id, format!("{} related ids, at most {MAX_RELATED} allowed", e.related.len()));
        }
        for r in &e.related {
            if r == id {
                flag(id, "lists itself as related".into());
            } else if kb.get(r).is_none() {
                flag(id, format!("related id {r:?} does not exist"));
            }
        }
    }
    KbReport { entries: kb.entries().len(), violations }
}

/// Canonical questions of the entry's related intents, in order, capped at three.
pub fn suggest_related(intent_id: &str, kb: &KnowledgeBase, lang: Language) -> Vec<String> {
    let Some(entry) = kb.get(intent_id) else {
        return Vec::new();
    };
    entry.related.iter().filter_map(|r| kb.question(r, lang)).take(MAX_RELATED).map(str::to_string).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str, related: &[&str]) -> FaqEntry {
        let both = |s: &str| BTreeMap::from([(Language::En, format!("{s} en")), (Language::Zh, format!("{s} zh"))]);
        FaqEntry {
            intent_id: id.into(),
            topic: Topic::DiabetesCare,
            question: both(id),
            answer: both("answer"),
            related: related.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn bundled_kb_validates_cleanly() {
        let kb = bundled_kb();
        let report = validate_kb(&kb);
        assert!(report.is_clean(), "{report}");
        assert!(kb.entries().len() >= 12);
    }

    #[test]
    fn dangling_related_id_is_named() {
        let kb = KnowledgeBase::new(vec![entry("a", &["ghost"])]);
        let report = validate_kb(&kb);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].intent_id, "a");
        assert!(report.violations[0].problem.contains("ghost"));
    }

    #[test]
    fn self_reference_and_missing_translation_reported() {
        let mut e = entry("a", &["a"]);
        e.answer.remove(&Language::Zh);
        let report = validate_kb(&KnowledgeBase::new(vec![e]));
        assert_eq!(report.violations.len(), 2);
    }

    #[test]
    fn empty_file_is_a_parse_error() {
        assert!(matches!(KnowledgeBase::parse(""), Err(DialogueError::Parse { line: 1, .. })));
    }

    #[test]
    fn suggestions_follow_related_order() {
        let kb = KnowledgeBase::new(vec![entry("a", &["c", "b"]), entry("b", &[]), entry("c", &[])]);
        assert_eq!(suggest_related("a", &kb, Language::En), ["c en", "b en"]);
        assert!(suggest_related("b", &kb, Language::En).is_empty());
        assert!(suggest_related("nope", &kb, Language::En).is_empty());
        assert_eq!(suggest_related("a", &kb, Language::Zh), ["c zh", "b zh"]);
    }

    #[test]
    fn bundled_zh_suggestions_are_chinese() {
        let kb = bundled_kb();
        let s = suggest_related("check_blood_glucose", &kb, Language::Zh);
        assert_eq!(s.len(), 3);
        assert_eq!(s[0], "正常的血糖水平是多少？");
    }
}
