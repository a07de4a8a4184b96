use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::StructuredReport;

/// Deterministic cleanup rules applied sentence by sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementRules {
    /// Lowercase words whose presence drops the whole sentence.
    pub forbidden_temporal_words: Vec<String>,
    /// Lowercase multi-word phrases that drop the sentence.
    pub forbidden_phrases: Vec<String>,
    /// Device phrases that drop the sentence (a plural `s` also matches).
    pub device_terms: Vec<String>,
    /// Units recognised in measurement runs such as "approximately 7 mm".
    pub measurement_units: Vec<String>,
    /// Optional words in front of the number that go with it.
    pub measurement_prefixes: Vec<String>,
    pub drop_lateral: bool,
    pub strip_underbars: bool,
}

impl Default for RefinementRules {
    fn default() -> Self {
        let words = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        RefinementRules {
            forbidden_temporal_words: words(&[
                "new",
                "previous",
                "comparison",
                "stable",
                "improved",
                "improving",
                "decreased",
                "increased",
                "changed",
                "unchanged",
                "resolved",
                "cleared",
            ]),
            forbidden_phrases: words(&["comparison with prior study", "prior study"]),
            device_terms: words(&[
                "catheter",
                "chest tube",
                "endotracheal tube",
                "PICC",
                "chemoport",
                "central line",
                "nasogastric tube",
            ]),
            measurement_units: words(&[
                "mm",
                "cm",
                "millimeter",
                "millimeters",
                "centimeter",
                "centimeters",
            ]),
            measurement_prefixes: words(&["measuring", "approximately", "about"]),
            drop_lateral: true,
            strip_underbars: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalRule {
    TemporalWord,
    PriorStudy,
    DeviceTerm,
    Lateral,
    /// A measurement run was deleted from the sentence (sentence kept).
    Measurement,
    /// Nothing but punctuation was left after edits.
    EmptyAfterEdit,
}

impl fmt::Display for RemovalRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RemovalRule::TemporalWord => "temporal_word",
            RemovalRule::PriorStudy => "prior_study",
            RemovalRule::DeviceTerm => "device_term",
            RemovalRule::Lateral => "lateral",
            RemovalRule::Measurement => "measurement",
            RemovalRule::EmptyAfterEdit => "empty_after_edit",
        };
        f.write_str(s)
    }
}

/// One audit entry: the original sentence and the rule that fired.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Removal {
    pub sentence: String,
    pub rule: RemovalRule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Refinement {
    pub report: StructuredReport,
    pub audit: Vec<Removal>,
}

impl Refinement {
    /// Audit line: `{"id": ..., "dropped": [{"sentence": ..., "rule": ...}]}`.
    pub fn audit_json(&self) -> serde_json::Value {
        serde_json::json!({ "id": self.report.id, "dropped": self.audit })
    }
}

struct Compiled {
    temporal: Option<Regex>,
    phrases: Option<Regex>,
    devices: Option<Regex>,
    measurement: Option<Regex>,
    lateral: Regex,
}

static SPACES: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\s+").unwrap());
static SPACE_BEFORE_PUNCT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r" ([.,;:!?])").unwrap());

fn alternation(items: &[String], plural: bool) -> Option<Regex> {
    if items.is_empty() {
        return None;
    }
    let alts: Vec<String> = items
        .iter()
        .map(|t| {
            t.split_whitespace()
                .map(regex::escape)
                .collect::<Vec<_>>()
                .join(r"\s+")
        })
        .collect();
    let suffix = if plural { "(?:e?s)?" } else { "" };
    Some(Regex::new(&format!(r"(?i)\b(?:{}){suffix}\b", alts.join("|"))).unwrap())
}

impl Compiled {
    fn new(rules: &RefinementRules) -> Self {
        let measurement = if rules.measurement_units.is_empty() {
            None
        } else {
            let units = rules
                .measurement_units
                .iter()
                .map(|u| regex::escape(u))
                .collect::<Vec<_>>()
                .join("|");
            let prefixes = rules
                .measurement_prefixes
                .iter()
                .map(|p| format!(r"{}\s+", regex::escape(p)))
                .collect::<Vec<_>>()
                .join("|");
            let prefix = if prefixes.is_empty() {
                String::new()
            } else {
                format!("(?:{prefixes})*")
            };
            let num = r"\d+(?:\.\d+)?";
            Some(
                Regex::new(&format!(
                    r"(?i)\b{prefix}{num}(?:\s*(?:x|by)\s*{num})*\s*(?:{units})\b"
                ))
                .unwrap(),
            )
        };
        Compiled {
            temporal: alternation(&rules.forbidden_temporal_words, false),
            phrases: alternation(&rules.forbidden_phrases, false),
            devices: alternation(&rules.device_terms, true),
            measurement,
            lateral: Regex::new(r"(?i)\blateral\b").unwrap(),
        }
    }
}

fn tidy(text: &str) -> String {
    let collapsed = SPACES.replace_all(text, " ");
    SPACE_BEFORE_PUNCT
        .replace_all(&collapsed, "$1")
        .trim()
        .to_string()
}

/// Apply the cleanup rules and keep the section structure.
///
/// Each sentence is edited to a fixed point (underscores to blanks,
/// measurement runs deleted, whitespace collapsed) and then dropped if the
/// edited text still contains a temporal word, a prior-study phrase, a device
/// term or, with `drop_lateral`, the word "lateral". Every edit and drop is
/// recorded in the audit list.
pub fn refine_rule_based(report: &StructuredReport, rules: &RefinementRules) -> Refinement {
    Refiner::new(rules).refine(report)
}

/// Rules with their patterns compiled once, for refining many reports.
pub struct Refiner {
    rules: RefinementRules,
    compiled: Compiled,
}

impl Refiner {
    pub fn new(rules: &RefinementRules) -> Self {
        Refiner {
            rules: rules.clone(),
            compiled: Compiled::new(rules),
        }
    }

    pub fn refine(&self, report: &StructuredReport) -> Refinement {
        refine_with(report, &self.rules, &self.compiled)
    }
}

fn refine_with(
    report: &StructuredReport,
    rules: &RefinementRules,
    compiled: &Compiled,
) -> Refinement {
    let mut audit = Vec::new();
    let mut out = report.clone();

    for section in &mut out.sections {
        let mut kept = Vec::with_capacity(section.sentences.len());
        for sentence in section.sentences.drain(..) {
            let original = sentence.text.clone();
            let mut text = original.clone();
            loop {
                let mut next = if rules.strip_underbars {
                    text.replace('_', " ")
                } else {
                    text.clone()
                };
                if let Some(re) = &compiled.measurement {
                    for m in re.find_iter(&next) {
                        audit.push(Removal {
                            sentence: original.clone(),
                            rule: RemovalRule::Measurement,
                            matched: Some(m.as_str().to_string()),
                        });
                    }
                    next = re.replace_all(&next, "").into_owned();
                }
                let next = tidy(&next);
                if next == text {
                    break;
                }
                text = next;
            }

            let drop = if !text.chars().any(char::is_alphanumeric) {
                Some((RemovalRule::EmptyAfterEdit, None))
            } else {
                let hit = |re: &Option<Regex>| {
                    re.as_ref()
                        .and_then(|r| r.find(&text))
                        .map(|m| m.as_str().to_string())
                };
                if let Some(m) = hit(&compiled.temporal) {
                    Some((RemovalRule::TemporalWord, Some(m)))
                } else if let Some(m) = hit(&compiled.phrases) {
                    Some((RemovalRule::PriorStudy, Some(m)))
                } else if let Some(m) = hit(&compiled.devices) {
                    Some((RemovalRule::DeviceTerm, Some(m)))
                } else if rules.drop_lateral && compiled.lateral.is_match(&text) {
                    Some((RemovalRule::Lateral, Some("lateral".to_string())))
                } else {
                    None
                }
            };
            match drop {
                Some((rule, matched)) => audit.push(Removal {
                    sentence: original,
                    rule,
                    matched,
                }),
                None => kept.push(super::Sentence { text, ..sentence }),
            }
        }
        section.sentences = kept;
    }
    Refinement { report: out, audit }
}

/// Scan for anything the rules forbid; used to check refined output.
pub(crate) fn violations(text: &str, rules: &RefinementRules) -> Vec<String> {
    let c = Compiled::new(rules);
    [&c.temporal, &c.phrases, &c.devices]
        .into_iter()
        .flatten()
        .flat_map(|re| {
            re.find_iter(text)
                .map(|m| m.as_str().to_string())
                .collect::<Vec<_>>()
        })
        .collect()
}
