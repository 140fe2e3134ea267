use super::{ChatRequest, ChatResponse, TransportError, Usage};
use serde::{Deserialize, Serialize};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub timestamp: f64,
    pub attempt: usize,
    pub request: ChatRequest,
    pub response: Option<String>,
    pub error: Option<String>,
    pub usage: Usage,
}

impl TranscriptEntry {
    pub fn new(request: &ChatRequest, attempt: usize, result: &Result<ChatResponse, TransportError>) -> Self {
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        let (response, error, usage) = match result {
            Ok(r) => (Some(r.text.clone()), None, r.usage),
            Err(e) => (None, Some(e.to_string()), Usage::default()),
        };
        Self { timestamp, attempt, request: request.clone(), response, error, usage }
    }
}

/// Append-only log of every request attempt, optionally mirrored to a
/// line-delimited JSON file.
#[derive(Debug, Default)]
pub struct Transcript {
    entries: Mutex<Vec<TranscriptEntry>>,
    file: Option<Mutex<File>>,
}

impl Transcript {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Append to `path`, creating it if needed; existing entries are loaded first.
    pub fn open(path: &Path) -> std::io::Result<Self> {
        let existing = if path.exists() { Self::load(path)? } else { Vec::new() };
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { entries: Mutex::new(existing), file: Some(Mutex::new(file)) })
    }

    pub fn load(path: &Path) -> std::io::Result<Vec<TranscriptEntry>> {
        let mut out = Vec::new();
        for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e = serde_json::from_str(&line).map_err(|e| {
                std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}:{}: {e}", path.display(), i + 1))
            })?;
            out.push(e);
        }
        Ok(out)
    }

    pub fn append(&self, entry: TranscriptEntry) {
        if let Some(f) = &self.file {
            let mut line = serde_json::to_string(&entry).expect("serializable");
            line.push('\n');
            let mut f = f.lock().unwrap();
            // a failed write must not take down the run; the in-memory copy remains
            let _ = f.write_all(line.as_bytes()).and_then(|_| f.flush());
        }
        self.entries.lock().unwrap().push(entry);
    }

    pub fn entries(&self) -> Vec<TranscriptEntry> {
        self.entries.lock().unwrap().clone()
    }

    pub fn total_usage(&self) -> Usage {
        self.entries.lock().unwrap().iter().fold(Usage::default(), |acc, e| Usage {
            prompt_tokens: acc.prompt_tokens + e.usage.prompt_tokens,
            completion_tokens: acc.completion_tokens + e.usage.completion_tokens,
        })
    }
}
