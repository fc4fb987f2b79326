use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use super::RouteTrace;

/// One line of a trace log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub trace_id: String,
    pub timestamp: DateTime<Utc>,
    #[serde(flatten)]
    pub trace: RouteTrace,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

struct Current {
    day: NaiveDate,
    file: File,
}

/// Appends trace records as JSONL to `traces-YYYY-MM-DD.jsonl` under a
/// directory, starting a new file when the UTC date changes. Each record is
/// written with a single `write_all` under a lock.
pub struct TraceSink {
    dir: PathBuf,
    current: Mutex<Option<Current>>,
}

impl TraceSink {
    pub fn new(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir, current: Mutex::new(None) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn file_for(&self, day: NaiveDate) -> PathBuf {
        self.dir.join(format!("traces-{}.jsonl", day.format("%Y-%m-%d")))
    }

    pub fn append(&self, record: &TraceRecord) -> io::Result<()> {
        let mut line = serde_json::to_vec(record)?;
        line.push(b'\n');
        let day = record.timestamp.date_naive();

        let mut guard = self.current.lock().unwrap_or_else(|e| e.into_inner());
        if guard.as_ref().is_none_or(|c| c.day != day) {
            let file = OpenOptions::new().create(true).append(true).open(self.file_for(day))?;
            *guard = Some(Current { day, file });
        }
        let current = guard.as_mut().expect("file opened above");
        current.file.write_all(&line)
    }

    pub fn flush(&self) -> io::Result<()> {
        let mut guard = self.current.lock().unwrap_or_else(|e| e.into_inner());
        match guard.as_mut() {
            Some(c) => c.file.sync_data(),
            None => Ok(()),
        }
    }
}
