use std::collections::BTreeMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{StudyError, StudySession};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Grade {
    A,
    B,
    C,
    D,
}

impl Grade {
    pub const ALL: [Grade; 4] = [Grade::A, Grade::B, Grade::C, Grade::D];

    pub fn meaning(self) -> &'static str {
        match self {
            Grade::A => "acceptable without any revision",
            Grade::B => "acceptable with minor revision",
            Grade::C => "acceptable with major revision",
            Grade::D => "unacceptable",
        }
    }

    /// A or B.
    pub fn is_success(self) -> bool {
        matches!(self, Grade::A | Grade::B)
    }
}

impl fmt::Display for Grade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Grade::A => "A",
            Grade::B => "B",
            Grade::C => "C",
            Grade::D => "D",
        })
    }
}

impl FromStr for Grade {
    type Err = StudyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "A" | "a" => Ok(Grade::A),
            "B" | "b" => Ok(Grade::B),
            "C" | "c" => Ok(Grade::C),
            "D" | "d" => Ok(Grade::D),
            other => Err(StudyError::BadGrade(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rating {
    pub rater_id: String,
    pub item_index: usize,
    pub grade: Grade,
    pub submitted_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    #[serde(flatten)]
    pub rating: Rating,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub seq: u64,
}

/// Append-only JSONL ratings log. A write is acknowledged only after the
/// line is flushed and synced; a torn trailing line is discarded on open.
#[derive(Debug)]
pub struct RatingsLog {
    path: Option<PathBuf>,
    file: Option<File>,
    entries: Vec<LogEntry>,
}

impl RatingsLog {
    pub fn in_memory() -> Self {
        RatingsLog {
            path: None,
            file: None,
            entries: Vec::new(),
        }
    }

    /// Open or create the log, replaying complete lines.
    pub fn open(path: &Path) -> Result<Self, StudyError> {
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        if complete < bytes.len() {
            log::warn!(
                "{}: dropping {} bytes of torn trailing entry",
                path.display(),
                bytes.len() - complete
            );
            file.set_len(complete as u64)?;
            file.seek(SeekFrom::End(0))?;
        }
        let entries = parse_entries(&bytes[..complete])?;
        Ok(RatingsLog {
            path: Some(path.to_path_buf()),
            file: Some(file),
            entries,
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn next_seq(&self) -> u64 {
        self.entries.last().map_or(1, |e| e.seq + 1)
    }

    /// Validate against the session, then append durably.
    pub fn append(&mut self, session: &StudySession, rating: Rating) -> Result<Ack, StudyError> {
        if !session.orders.contains_key(&rating.rater_id) {
            return Err(StudyError::UnknownRater(rating.rater_id));
        }
        if rating.item_index >= session.total_items() {
            return Err(StudyError::PositionOutOfRange {
                pos: rating.item_index,
                total: session.total_items(),
            });
        }
        let entry = LogEntry {
            seq: self.next_seq(),
            rating,
        };
        if let Some(file) = &mut self.file {
            let mut line = serde_json::to_string(&entry)?;
            line.push('\n');
            file.write_all(line.as_bytes())?;
            file.flush()?;
            file.sync_data()?;
        }
        let ack = Ack { seq: entry.seq };
        self.entries.push(entry);
        Ok(ack)
    }

    pub fn to_jsonl(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("entry serializes") + "\n")
            .collect()
    }

    /// Effective rating per (rater, item): the entry with the highest seq.
    pub fn effective(&self) -> BTreeMap<(String, usize), LogEntry> {
        effective_ratings(&self.entries)
    }
}

fn parse_entries(bytes: &[u8]) -> Result<Vec<LogEntry>, StudyError> {
    let text = std::str::from_utf8(bytes).map_err(|e| StudyError::CorruptLog {
        line: 0,
        message: e.to_string(),
    })?;
    let mut entries: Vec<LogEntry> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: LogEntry = serde_json::from_str(line).map_err(|e| StudyError::CorruptLog {
            line: i + 1,
            message: e.to_string(),
        })?;
        if let Some(prev) = entries.last() {
            if entry.seq <= prev.seq {
                return Err(StudyError::CorruptLog {
                    line: i + 1,
                    message: format!("seq {} does not follow {}", entry.seq, prev.seq),
                });
            }
        }
        entries.push(entry);
    }
    Ok(entries)
}

/// Last write wins, judged by seq rather than position.
pub fn effective_ratings(entries: &[LogEntry]) -> BTreeMap<(String, usize), LogEntry> {
    let mut out: BTreeMap<(String, usize), LogEntry> = BTreeMap::new();
    for e in entries {
        let key = (e.rating.rater_id.clone(), e.rating.item_index);
        match out.get(&key) {
            Some(prev) if prev.seq > e.seq => {}
            _ => {
                out.insert(key, e.clone());
            }
        }
    }
    out
}
