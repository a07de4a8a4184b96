//! Evaluation toolkit for generated chest radiograph reports.
//!
//! The pipeline mirrors how generated reports are scored against reference
//! reports: reports are loaded ([`corpus`]), split and cleaned
//! ([`normalizer`]), turned into 14-finding label vectors by a rule-based
//! labeler ([`labeler`]), and compared with exclusion rules, F1 scores,
//! bootstrap confidence intervals and Cochran's Q ([`metrics`]). Blinded
//! reader studies are handled by [`study`].

pub mod corpus;
pub mod labeler;
pub mod metrics;
pub mod normalizer;
pub mod study;

pub use corpus::{Corpus, Finding, FindingLabel, ReportRecord};
pub use labeler::{label_report, LabelVector, Lexicon};
pub use metrics::{evaluate, ExclusionConfig, MetricsReport};
pub use normalizer::{extract_sections, refine_rule_based, RefinementRules, StructuredReport};
pub use study::{analyze_session, create_session, Grade, Rating, StudySession, StudySummary};
