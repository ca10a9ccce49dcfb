//! Append-only document collections.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("invalid collection name {0:?}")]
    Collection(String),
    #[error("collection {collection} line {line} is corrupt")]
    Corrupt { collection: String, line: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub trait DocumentStore: Send + Sync {
    /// Durably appends one document.
    fn append(&self, collection: &str, doc: &Value) -> Result<(), StoreError>;
    /// All documents of a collection in append order.
    fn load(&self, collection: &str) -> Result<Vec<Value>, StoreError>;
}

fn check_name(name: &str) -> Result<(), StoreError> {
    if name.is_empty() || !name.bytes().all(|b| b.is_ascii_lowercase() || b == b'_') {
        return Err(StoreError::Collection(name.into()));
    }
    Ok(())
}

/// One JSON document per line in `<dir>/<collection>.jsonl`, fsynced on
/// every append. A torn final line left by a crash is truncated on open.
pub struct FileStore {
    dir: PathBuf,
    files: Mutex<HashMap<String, File>>,
    repaired: Vec<String>,
}

fn repair_tail(path: &Path) -> Result<bool, StoreError> {
    let mut file = OpenOptions::new().read(true).write(true).open(path)?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)?;
    if bytes.is_empty() || bytes.ends_with(b"\n") {
        return Ok(false);
    }
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    file.set_len(keep as u64)?;
    file.seek(SeekFrom::End(0))?;
    file.sync_all()?;
    Ok(true)
}

impl FileStore {
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        std::fs::create_dir_all(dir)?;
        let mut repaired = Vec::new();
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "jsonl") && repair_tail(&path)? {
                repaired.push(path.file_stem().unwrap_or_default().to_string_lossy().into_owned());
            }
        }
        repaired.sort();
        Ok(Self { dir: dir.to_path_buf(), files: Mutex::new(HashMap::new()), repaired })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Collections whose torn final line was dropped on open.
    pub fn repaired(&self) -> &[String] {
        &self.repaired
    }

    fn path(&self, collection: &str) -> PathBuf {
        self.dir.join(format!("{collection}.jsonl"))
    }
}

impl DocumentStore for FileStore {
    fn append(&self, collection: &str, doc: &Value) -> Result<(), StoreError> {
        check_name(collection)?;
        let mut line = serde_json::to_vec(doc)?;
        line.push(b'\n');
        let mut files = self.files.lock().unwrap_or_else(|p| p.into_inner());
        if !files.contains_key(collection) {
            let f = OpenOptions::new().create(true).append(true).open(self.path(collection))?;
            files.insert(collection.to_string(), f);
        }
        let file = files.get_mut(collection).expect("inserted above");
        file.write_all(&line)?;
        file.sync_data()?;
        Ok(())
    }

    fn load(&self, collection: &str) -> Result<Vec<Value>, StoreError> {
        check_name(collection)?;
        let _guard = self.files.lock().unwrap_or_else(|p| p.into_inner());
        let text = match std::fs::read_to_string(self.path(collection)) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let complete = text.rfind('\n').map_or("", |i| &text[..i]);
        complete
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).map_err(|_| StoreError::Corrupt { collection: collection.into(), line: i + 1 }))
            .collect()
    }
}

#[derive(Default)]
pub struct MemoryStore {
    docs: Mutex<HashMap<String, Vec<Value>>>,
}

impl DocumentStore for MemoryStore {
    fn append(&self, collection: &str, doc: &Value) -> Result<(), StoreError> {
        check_name(collection)?;
        self.docs.lock().unwrap_or_else(|p| p.into_inner()).entry(collection.into()).or_default().push(doc.clone());
        Ok(())
    }

    fn load(&self, collection: &str) -> Result<Vec<Value>, StoreError> {
        check_name(collection)?;
        Ok(self.docs.lock().unwrap_or_else(|p| p.into_inner()).get(collection).cloned().unwrap_or_default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn appends_survive_reopen() {
        let dir = tempfile::tempdir().unwrap();
        {
            let s = FileStore::open(dir.path()).unwrap();
            s.append("chat", &json!({"a": 1})).unwrap();
            s.append("chat", &json!({"a": 2})).unwrap();
        }
        let s = FileStore::open(dir.path()).unwrap();
        assert_eq!(s.load("chat").unwrap(), vec![json!({"a": 1}), json!({"a": 2})]);
        assert!(s.load("other").unwrap().is_empty());
    }

    #[test]
    fn torn_tail_is_dropped_and_appends_continue() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("chat.jsonl"), "{\"a\":1}\n{\"a\":").unwrap();
        let s = FileStore::open(dir.path()).unwrap();
        assert_eq!(s.repaired(), ["chat"]);
        s.append("chat", &json!({"a": 3})).unwrap();
        assert_eq!(s.load("chat").unwrap(), vec![json!({"a": 1}), json!({"a": 3})]);
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("chat.jsonl"), "{\"a\":1}\nnot json\n{\"a\":2}\n").unwrap();
        let s = FileStore::open(dir.path()).unwrap();
        assert!(matches!(s.load("chat"), Err(StoreError::Corrupt { line: 2, .. })));
    }

    #[test]
    fn collection_names_are_restricted() {
        let s = MemoryStore::default();
        assert!(s.append("../x", &json!(1)).is_err());
        assert!(s.append("", &json!(1)).is_err());
    }
}
