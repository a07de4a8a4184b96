//! Report sectioning, sentence segmentation and cleanup.
//!
//! [`extract_sections`] turns a raw report into a [`StructuredReport`] whose
//! sentences carry byte offsets back into the raw text. [`refine_rule_based`]
//! applies the deterministic cleanup rules; [`llm`] holds the optional
//! chat-completion client for model-assisted rewriting.

pub mod llm;
mod refine;
mod sections;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use llm::{llm_refine, RefineEndpointConfig, RefinedReport};
pub use refine::{refine_rule_based, Refinement, RefinementRules, Refiner, Removal, RemovalRule};
pub use sections::{extract_sections, segment_sentences};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionKind {
    Findings,
    Impression,
    Other,
}

/// A sentence and its byte range in the text it was cut from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub kind: SectionKind,
    /// False for the implicit section of a report without headers.
    pub has_header: bool,
    /// Byte range of the section body in the raw report.
    pub start: usize,
    pub end: usize,
    pub sentences: Vec<Sentence>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredReport {
    pub id: String,
    pub raw: String,
    pub sections: Vec<Section>,
}

impl StructuredReport {
    pub fn sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.sections.iter().flat_map(|s| s.sentences.iter())
    }

    pub fn sentence_count(&self) -> usize {
        self.sections.iter().map(|s| s.sentences.len()).sum()
    }

    /// Sentences the labeler reads: findings and impression sections.
    /// Free text ahead of the first header (indication, history) is skipped.
    pub fn labelable_sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.sections
            .iter()
            .filter(|s| s.kind != SectionKind::Other)
            .flat_map(|s| s.sentences.iter())
    }

    /// Render back to report text, one line per section.
    pub fn to_text(&self) -> String {
        let mut lines = Vec::new();
        for section in &self.sections {
            let body = section
                .sentences
                .iter()
                .map(|s| s.text.as_str())
                .collect::<Vec<_>>()
                .join(" ");
            let line = match (section.has_header, section.kind) {
                (true, SectionKind::Findings) => format!("Findings: {body}"),
                (true, SectionKind::Impression) => format!("Impression: {body}"),
                _ => body,
            };
            let line = line.trim_end().to_string();
            if !line.is_empty() {
                lines.push(line);
            }
        }
        lines.join("\n")
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NormalizeError {
    #[error("report is empty")]
    EmptyReport,
}
