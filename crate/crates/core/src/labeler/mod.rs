//! Rule-based extraction of the 14-finding label vector from report text.
//!
//! Three stages: lexicon phrase matching per sentence ([`detect_mentions`]),
//! window-scoped negation/uncertainty classification per mention
//! ([`classify_mention`]), and aggregation per finding by label precedence
//! ([`label_report`]). `no_finding` is derived from the other findings.

mod lexicon;
mod mentions;
mod polarity;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::corpus::{Finding, FindingLabel};
use crate::normalizer::StructuredReport;

pub use lexicon::{Lexicon, LexiconError};
pub use mentions::{detect_mentions, tokenize, CompiledLexicon, Mention, Token, TokenKind};
pub use polarity::classify_mention;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LabelError {
    #[error("report `{0}` has no sentences to label")]
    EmptyReport(String),
}

/// One piece of evidence behind a label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub mention: Mention,
    pub polarity: FindingLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector {
    labels: BTreeMap<Finding, FindingLabel>,
    #[serde(default)]
    pub provenance: BTreeMap<Finding, Vec<Evidence>>,
}

impl Default for LabelVector {
    fn default() -> Self {
        LabelVector {
            labels: Finding::ALL
                .iter()
                .map(|f| (*f, FindingLabel::NotMentioned))
                .collect(),
            provenance: BTreeMap::new(),
        }
    }
}

impl LabelVector {
    /// Build from a partial map; missing findings are `NotMentioned`.
    pub fn from_labels(labels: &BTreeMap<Finding, FindingLabel>) -> Self {
        let mut v = LabelVector::default();
        for (f, l) in labels {
            v.labels.insert(*f, *l);
        }
        v
    }

    pub fn get(&self, finding: Finding) -> FindingLabel {
        self.labels[&finding]
    }

    pub fn set(&mut self, finding: Finding, label: FindingLabel) {
        self.labels.insert(finding, label);
    }

    pub fn iter(&self) -> impl Iterator<Item = (Finding, FindingLabel)> + '_ {
        self.labels.iter().map(|(f, l)| (*f, *l))
    }

    /// Set `no_finding` from the pathology labels: positive when none of them
    /// is positive or uncertain, otherwise not mentioned.
    pub fn derive_no_finding(&mut self) {
        let clean = self
            .labels
            .iter()
            .filter(|(f, _)| !f.is_meta() && !f.is_non_pathology())
            .all(|(_, l)| matches!(l, FindingLabel::Negative | FindingLabel::NotMentioned));
        let label = if clean {
            FindingLabel::Positive
        } else {
            FindingLabel::NotMentioned
        };
        self.labels.insert(Finding::NoFinding, label);
    }

    /// `{finding: "positive" | "negative" | "uncertain" | null}`.
    pub fn to_output_map(&self) -> serde_json::Map<String, Value> {
        self.labels
            .iter()
            .map(|(f, l)| {
                let v = match l {
                    FindingLabel::NotMentioned => Value::Null,
                    other => Value::String(other.as_str().to_string()),
                };
                (f.as_str().to_string(), v)
            })
            .collect()
    }
}

/// Reusable labeler with the lexicon tokenized once.
#[derive(Debug, Clone)]
pub struct Labeler {
    compiled: CompiledLexicon,
}

impl Labeler {
    pub fn new(lexicon: &Lexicon) -> Self {
        Labeler {
            compiled: CompiledLexicon::new(lexicon),
        }
    }

    pub fn label(&self, report: &StructuredReport) -> Result<LabelVector, LabelError> {
        if report.labelable_sentences().next().is_none() {
            return Err(LabelError::EmptyReport(report.id.clone()));
        }
        let mut vector = LabelVector::default();
        for (i, sentence) in report.labelable_sentences().enumerate() {
            let tokens = tokenize(&sentence.text);
            for mention in self.compiled.mentions_in_sentence(i, &tokens) {
                let polarity = polarity::classify_compiled(&mention, &tokens, &self.compiled);
                let f = mention.finding;
                if polarity > vector.get(f) {
                    vector.set(f, polarity);
                }
                vector
                    .provenance
                    .entry(f)
                    .or_default()
                    .push(Evidence { mention, polarity });
            }
        }
        vector.derive_no_finding();
        Ok(vector)
    }
}

/// Label one structured report.
pub fn label_report(
    report: &StructuredReport,
    lexicon: &Lexicon,
) -> Result<LabelVector, LabelError> {
    Labeler::new(lexicon).label(report)
}
