//! Append-only topic mirror: one record per envelope, written as a decimal
//! byte length, a newline, the envelope document, and a trailing newline.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use super::envelope::Envelope;
use super::BusError;

pub(crate) struct TopicMirror {
    log: File,
    cursors_path: PathBuf,
}

fn sanitize(topic: &str) -> String {
    topic
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '.' || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub(crate) fn log_path(dir: &Path, topic: &str) -> PathBuf {
    dir.join(format!("{}.log", sanitize(topic)))
}

pub(crate) fn cursors_path(dir: &Path, topic: &str) -> PathBuf {
    dir.join(format!("{}.cursors", sanitize(topic)))
}

impl TopicMirror {
    pub fn open(dir: &Path, topic: &str) -> Result<Self, BusError> {
        std::fs::create_dir_all(dir).map_err(|e| BusError::Io(e.to_string()))?;
        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(log_path(dir, topic))
            .map_err(|e| BusError::Io(e.to_string()))?;
        Ok(Self { log, cursors_path: cursors_path(dir, topic) })
    }

    pub fn append(&mut self, env: &Envelope) -> Result<(), BusError> {
        let body = serde_json::to_string(env).map_err(|e| BusError::Io(e.to_string()))?;
        let record = format!("{}\n{}\n", body.len(), body);
        self.log
            .write_all(record.as_bytes())
            .and_then(|_| self.log.flush())
            .map_err(|e| BusError::Io(e.to_string()))
    }

    pub fn persist_cursors(&self, cursors: &HashMap<String, u64>) -> Result<(), BusError> {
        let ordered: std::collections::BTreeMap<_, _> = cursors.iter().collect();
        let text = serde_json::to_string(&ordered).map_err(|e| BusError::Io(e.to_string()))?;
        std::fs::write(&self.cursors_path, text).map_err(|e| BusError::Io(e.to_string()))
    }
}

/// Read a whole topic log back. Fails on any malformed record.
pub(crate) fn read_log(path: &Path) -> Result<Vec<Envelope>, BusError> {
    let file = File::open(path).map_err(|e| BusError::Io(e.to_string()))?;
    let mut reader = BufReader::new(file);
    let mut entries = Vec::new();
    let mut line = String::new();
    loop {
        line.clear();
        let n = reader.read_line(&mut line).map_err(|e| BusError::Io(e.to_string()))?;
        if n == 0 {
            break;
        }
        let len: usize = line.trim().parse().map_err(|_| BusError::CorruptLog {
            file: path.display().to_string(),
            record: entries.len(),
            reason: format!("bad length prefix {:?}", line.trim()),
        })?;
        let mut body = vec![0u8; len];
        reader.read_exact(&mut body).map_err(|e| BusError::CorruptLog {
            file: path.display().to_string(),
            record: entries.len(),
            reason: e.to_string(),
        })?;
        let env: Envelope = serde_json::from_slice(&body).map_err(|e| BusError::CorruptLog {
            file: path.display().to_string(),
            record: entries.len(),
            reason: e.to_string(),
        })?;
        entries.push(env);
        // trailing newline after the body
        let mut nl = [0u8; 1];
        if reader.read(&mut nl).map_err(|e| BusError::Io(e.to_string()))? == 1 && nl[0] != b'\n' {
            return Err(BusError::CorruptLog {
                file: path.display().to_string(),
                record: entries.len(),
                reason: "missing record terminator".into(),
            });
        }
    }
    Ok(entries)
}

pub(crate) fn read_cursors(path: &Path) -> Result<HashMap<String, u64>, BusError> {
    let text = std::fs::read_to_string(path).map_err(|e| BusError::Io(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| BusError::CorruptLog {
        file: path.display().to_string(),
        record: 0,
        reason: e.to_string(),
    })
}
