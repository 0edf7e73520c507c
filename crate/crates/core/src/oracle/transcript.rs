use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::OracleError;

/// One recorded exchange. `response` is a string for chat and an array of
/// vectors for embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub digest: String,
    pub request: serde_json::Value,
    pub response: serde_json::Value,
    pub latency_s: f64,
}

/// Append-only JSONL log of exchanges, indexed by digest.
#[derive(Debug, Default)]
pub struct Transcript {
    records: Vec<Record>,
    index: HashMap<String, usize>,
    sink: Option<(PathBuf, File)>,
}

impl Transcript {
    /// In-memory transcript with no backing file.
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(path: &Path) -> Result<Self, OracleError> {
        let mut t = Self::new();
        let file = File::open(path).map_err(|e| OracleError::Io(format!("{}: {e}", path.display())))?;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| OracleError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(&line).map_err(|e| {
                OracleError::Transcript(format!("{}:{}: {e}", path.display(), i + 1))
            })?;
            t.insert(rec);
        }
        Ok(t)
    }

    /// Loads `path` if it exists and appends new records to it.
    pub fn open_append(path: &Path) -> Result<Self, OracleError> {
        let mut t = if path.exists() { Self::load(path)? } else { Self::new() };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| OracleError::Io(e.to_string()))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| OracleError::Io(format!("{}: {e}", path.display())))?;
        t.sink = Some((path.to_path_buf(), file));
        Ok(t)
    }

    fn insert(&mut self, rec: Record) -> bool {
        if self.index.contains_key(&rec.digest) {
            return false;
        }
        self.index.insert(rec.digest.clone(), self.records.len());
        self.records.push(rec);
        true
    }

    pub fn get(&self, digest: &str) -> Option<&Record> {
        self.index.get(digest).map(|&i| &self.records[i])
    }

    /// Adds a record unless its digest is already present. Returns whether
    /// it was added.
    pub fn append(&mut self, rec: Record) -> Result<bool, OracleError> {
        if self.index.contains_key(&rec.digest) {
            return Ok(false);
        }
        if let Some((path, file)) = &mut self.sink {
            let line = serde_json::to_string(&rec).map_err(|e| OracleError::Transcript(e.to_string()))?;
            writeln!(file, "{line}")
                .and_then(|_| file.flush())
                .map_err(|e| OracleError::Io(format!("{}: {e}", path.display())))?;
        }
        Ok(self.insert(rec))
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}
