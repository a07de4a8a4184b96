//! Blinded reader study: sampling, per-rater randomized presentation,
//! an append-only ratings log, and the acceptability summary.

mod analysis;
mod log;
mod session;

use thiserror::Error;

pub use analysis::{analyze_session, ConditionSummary, StudySummary};
pub use log::{effective_ratings, Ack, Grade, LogEntry, Rating, RatingsLog};
pub use session::{
    create_session, Condition, Presentation, SessionConfig, StudyItem, StudySession,
};

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("not enough {class} records: need {needed}, have {available} (short by {})", needed - available)]
    InsufficientRecords {
        class: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("record `{record_id}` has no {field}")]
    MissingField {
        record_id: String,
        field: &'static str,
    },
    #[error("at least one rater is required")]
    NoRaters,
    #[error("rater `{0}` listed twice")]
    DuplicateRater(String),
    #[error("unknown rater `{0}`")]
    UnknownRater(String),
    #[error("position {pos} out of range (0..{total})")]
    PositionOutOfRange { pos: usize, total: usize },
    #[error("bad grade `{0}`: expected A, B, C or D")]
    BadGrade(String),
    #[error("ratings log line {line} is corrupt: {message}")]
    CorruptLog { line: usize, message: String },
    #[error("storage error: {0}")]
    Storage(#[from] std::io::Error),
    #[error("session file: {0}")]
    SessionFile(#[from] serde_json::Error),
    #[error("no ratings to analyze")]
    EmptyRatings,
}
