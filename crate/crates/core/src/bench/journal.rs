use super::grid::RunRecord;
use super::BenchError;
use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

pub(crate) type RunKey = (String, String, usize, u64, usize);

pub(crate) fn key(r: &RunRecord) -> RunKey {
    (r.method.clone(), r.mechanism.clone(), r.config_index, r.epsilon.to_bits(), r.seed)
}

/// Append-only log of completed runs. Reopening a journal makes its
/// records available for reuse, so an interrupted sweep resumes where it stopped.
pub struct Journal {
    file: Option<Mutex<File>>,
    done: HashMap<RunKey, RunRecord>,
}

impl Journal {
    pub fn in_memory() -> Self {
        Self { file: None, done: HashMap::new() }
    }

    pub fn open(path: &Path) -> Result<Self, BenchError> {
        let mut done = HashMap::new();
        if path.exists() {
            let f = File::open(path).map_err(|e| BenchError::Journal(e.to_string()))?;
            for (i, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(|e| BenchError::Journal(e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                // a torn final line from an interrupted write is dropped
                match serde_json::from_str::<RunRecord>(&line) {
                    Ok(r) => {
                        done.insert(key(&r), r);
                    }
                    Err(e) => eprintln!("journal line {} skipped: {e}", i + 1),
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| BenchError::Journal(e.to_string()))?;
        Ok(Self { file: Some(Mutex::new(file)), done })
    }

    pub fn completed(&self) -> usize {
        self.done.len()
    }

    pub(crate) fn lookup(&self, k: &RunKey) -> Option<&RunRecord> {
        self.done.get(k)
    }

    pub(crate) fn append(&self, r: &RunRecord) -> Result<(), BenchError> {
        let Some(file) = &self.file else { return Ok(()) };
        let line = serde_json::to_string(r).expect("serializable") + "\n";
        let mut f = file.lock().unwrap();
        f.write_all(line.as_bytes()).and_then(|_| f.flush()).map_err(|e| BenchError::Journal(e.to_string()))
    }
}
