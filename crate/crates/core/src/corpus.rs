//! Canonical data model and file ingestion.
//!
//! The interchange format is JSONL, one report per line:
//!
//! ```text
//! {"id": "s1", "text": "...", "ground_truth_text": "...", "abnormal": true,
//!  "image": "img/s1.png", "labels": {"pleural_effusion": 1, "edema": 0, "fracture": null}}
//! ```
//!
//! Binary ground-truth label tables (CheXpert style) are read from CSV.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const SCHEMA_VERSION: &str = "1";

/// The 14 observation categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Finding {
    Atelectasis,
    Cardiomegaly,
    Consolidation,
    Edema,
    EnlargedCardiomediastinum,
    Fracture,
    LungLesion,
    LungOpacity,
    NoFinding,
    PleuralEffusion,
    PleuralOther,
    Pneumonia,
    Pneumothorax,
    SupportDevices,
}

impl Finding {
    pub const ALL: [Finding; 14] = [
        Finding::Atelectasis,
        Finding::Cardiomegaly,
        Finding::Consolidation,
        Finding::Edema,
        Finding::EnlargedCardiomediastinum,
        Finding::Fracture,
        Finding::LungLesion,
        Finding::LungOpacity,
        Finding::NoFinding,
        Finding::PleuralEffusion,
        Finding::PleuralOther,
        Finding::Pneumonia,
        Finding::Pneumothorax,
        Finding::SupportDevices,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Finding::Atelectasis => "atelectasis",
            Finding::Cardiomegaly => "cardiomegaly",
            Finding::Consolidation => "consolidation",
            Finding::Edema => "edema",
            Finding::EnlargedCardiomediastinum => "enlarged_cardiomediastinum",
            Finding::Fracture => "fracture",
            Finding::LungLesion => "lung_lesion",
            Finding::LungOpacity => "lung_opacity",
            Finding::NoFinding => "no_finding",
            Finding::PleuralEffusion => "pleural_effusion",
            Finding::PleuralOther => "pleural_other",
            Finding::Pneumonia => "pneumonia",
            Finding::Pneumothorax => "pneumothorax",
            Finding::SupportDevices => "support_devices",
        }
    }

    /// Human-readable name as used in result tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Finding::Atelectasis => "Atelectasis",
            Finding::Cardiomegaly => "Cardiomegaly",
            Finding::Consolidation => "Consolidation",
            Finding::Edema => "Edema",
            Finding::EnlargedCardiomediastinum => "Enlarged cardiomediastinum",
            Finding::Fracture => "Fracture",
            Finding::LungLesion => "Lung lesion",
            Finding::LungOpacity => "Lung opacity",
            Finding::NoFinding => "No finding",
            Finding::PleuralEffusion => "Pleural effusion",
            Finding::PleuralOther => "Pleural other",
            Finding::Pneumonia => "Pneumonia",
            Finding::Pneumothorax => "Pneumothorax",
            Finding::SupportDevices => "Support devices",
        }
    }

    /// `no_finding` summarises the others rather than describing an observation.
    pub fn is_meta(self) -> bool {
        self == Finding::NoFinding
    }

    /// `support_devices` is an observation but not a pathology.
    pub fn is_non_pathology(self) -> bool {
        self == Finding::SupportDevices
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown finding `{0}`")]
pub struct UnknownFinding(pub String);

impl FromStr for Finding {
    type Err = UnknownFinding;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Finding::ALL
            .iter()
            .copied()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| UnknownFinding(s.to_string()))
    }
}

/// Per-finding label. The derived `Ord` is the aggregation precedence:
/// `Positive > Uncertain > Negative > NotMentioned`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingLabel {
    NotMentioned,
    Negative,
    Uncertain,
    Positive,
}

impl FindingLabel {
    pub fn is_definite(self) -> bool {
        matches!(self, FindingLabel::Positive | FindingLabel::Negative)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FindingLabel::NotMentioned => "not_mentioned",
            FindingLabel::Negative => "negative",
            FindingLabel::Uncertain => "uncertain",
            FindingLabel::Positive => "positive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abnormal: Option<bool>,
    /// Opaque image reference (path relative to the study image root).
    #[serde(default, rename = "image", skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
    #[serde(
        default,
        rename = "labels",
        skip_serializing_if = "Option::is_none",
        with = "binary_labels_serde"
    )]
    pub binary_labels: Option<BTreeMap<Finding, FindingLabel>>,
}

impl ReportRecord {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        ReportRecord {
            id: id.into(),
            text: text.into(),
            ground_truth_text: None,
            abnormal: None,
            image_ref: None,
            binary_labels: None,
        }
    }
}

/// `labels` on the wire is `{finding: 1 | 0 | null}`.
mod binary_labels_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        labels: &Option<BTreeMap<Finding, FindingLabel>>,
        ser: S,
    ) -> Result<S::Ok, S::Error> {
        let map: BTreeMap<&str, Option<u8>> = labels
            .as_ref()
            .map(|m| {
                m.iter()
                    .map(|(f, l)| {
                        let v = match l {
                            FindingLabel::Positive => Some(1),
                            FindingLabel::Negative => Some(0),
                            _ => None,
                        };
                        (f.as_str(), v)
                    })
                    .collect()
            })
            .unwrap_or_default();
        map.serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        de: D,
    ) -> Result<Option<BTreeMap<Finding, FindingLabel>>, D::Error> {
        let raw: Option<BTreeMap<String, Option<u8>>> = Option::deserialize(de)?;
        let Some(raw) = raw else { return Ok(None) };
        let mut out: BTreeMap<Finding, FindingLabel> = Finding::ALL
            .iter()
            .map(|f| (*f, FindingLabel::NotMentioned))
            .collect();
        for (k, v) in raw {
            let f: Finding = k.parse().map_err(serde::de::Error::custom)?;
            let label = match v {
                Some(1) => FindingLabel::Positive,
                Some(0) => FindingLabel::Negative,
                None => FindingLabel::NotMentioned,
                Some(other) => {
                    return Err(serde::de::Error::custom(format!(
                        "label for {k} must be 1, 0 or null, got {other}"
                    )))
                }
            };
            out.insert(f, label);
        }
        Ok(Some(out))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub records: Vec<ReportRecord>,
    pub source_path: String,
    pub schema_version: String,
    /// Number of unrecognised top-level JSON keys skipped while loading.
    pub unknown_key_warnings: usize,
}

impl Corpus {
    pub fn from_records(records: Vec<ReportRecord>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for (i, r) in records.iter().enumerate() {
            if r.id.trim().is_empty() {
                return Err(CorpusError::MissingField {
                    line: i + 1,
                    field: "id",
                });
            }
            if r.text.trim().is_empty() {
                return Err(CorpusError::MissingField {
                    line: i + 1,
                    field: "text",
                });
            }
            if !seen.insert(r.id.as_str()) {
                return Err(CorpusError::DuplicateId {
                    id: r.id.clone(),
                    line: i + 1,
                });
            }
        }
        Ok(Corpus {
            records,
            source_path: String::new(),
            schema_version: SCHEMA_VERSION.to_string(),
            unknown_key_warnings: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ReportRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn index_by_id(&self) -> HashMap<&str, &ReportRecord> {
        self.records.iter().map(|r| (r.id.as_str(), r)).collect()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<(), CorpusError> {
        let mut f = fs::File::create(path).map_err(|e| CorpusError::io(path, e))?;
        f.write_all(self.to_jsonl().as_bytes())
            .map_err(|e| CorpusError::io(path, e))
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: missing or empty field `{field}`")]
    MissingField { line: usize, field: &'static str },
    #[error("line {line}: duplicate id `{id}`")]
    DuplicateId { id: String, line: usize },
    #[error("line {line} (byte offset {byte_offset}): {message}")]
    MalformedLine {
        line: usize,
        byte_offset: usize,
        message: String,
    },
    #[error("column `{0}` not found in CSV header")]
    UnknownColumn(String),
    #[error("column `{0}` appears more than once in CSV header")]
    DuplicateColumn(String),
    #[error("row {row}, column `{column}`: bad cell value `{value}` (expected 1, 0 or empty)")]
    BadCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CorpusError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

const KNOWN_KEYS: [&str; 6] = [
    "id",
    "text",
    "ground_truth_text",
    "abnormal",
    "image",
    "labels",
];

/// Parse JSONL text. `source_path` is only recorded.
pub fn parse_corpus(content: &str, source_path: &str) -> Result<Corpus, CorpusError> {
    let mut records = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut unknown = 0usize;
    let mut offset = 0usize;

    for (i, raw_line) in content.split_inclusive('\n').enumerate() {
        let line_no = i + 1;
        let line_offset = offset;
        offset += raw_line.len();
        let line = raw_line.trim_end_matches(['\n', '\r']);
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(line).map_err(|e| CorpusError::MalformedLine {
            line: line_no,
            byte_offset: line_offset + e.column().saturating_sub(1),
            message: e.to_string(),
        })?;
        let Value::Object(obj) = &value else {
            return Err(CorpusError::MalformedLine {
                line: line_no,
                byte_offset: line_offset,
                message: "expected a JSON object".into(),
            });
        };
        for field in ["id", "text"] {
            let ok = obj
                .get(field)
                .and_then(Value::as_str)
                .is_some_and(|s| !s.trim().is_empty());
            if !ok {
                return Err(CorpusError::MissingField {
                    line: line_no,
                    field,
                });
            }
        }
        unknown += obj
            .keys()
            .filter(|k| !KNOWN_KEYS.contains(&k.as_str()))
            .count();

        let record: ReportRecord =
            serde_json::from_value(value.clone()).map_err(|e| CorpusError::MalformedLine {
                line: line_no,
                byte_offset: line_offset,
                message: e.to_string(),
            })?;
        if !seen.insert(record.id.clone()) {
            return Err(CorpusError::DuplicateId {
                id: record.id,
                line: line_no,
            });
        }
        records.push(record);
    }
    if unknown > 0 {
        log::warn!("{source_path}: ignored {unknown} unknown JSON key(s)");
    }
    Ok(Corpus {
        records,
        source_path: source_path.to_string(),
        schema_version: SCHEMA_VERSION.to_string(),
        unknown_key_warnings: unknown,
    })
}

pub fn load_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    let bytes = fs::read(path).map_err(|e| CorpusError::io(path, e))?;
    let content = String::from_utf8(bytes).map_err(|e| {
        let off = e.utf8_error().valid_up_to();
        let line = e.as_bytes()[..off].iter().filter(|b| **b == b'\n').count() + 1;
        CorpusError::MalformedLine {
            line,
            byte_offset: off,
            message: "invalid UTF-8".into(),
        }
    })?;
    parse_corpus(&content, &path.display().to_string())
}

/// Maps CSV header names to findings.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ColumnMap {
    pub id_column: String,
    pub columns: Vec<(String, Finding)>,
}

impl ColumnMap {
    /// Match headers to findings by name, ignoring case and treating spaces
    /// as underscores ("Pleural Effusion" → `pleural_effusion`).
    pub fn auto(id_column: &str, headers: &[&str]) -> Self {
        let columns = headers
            .iter()
            .filter_map(|h| {
                let norm = h.trim().to_lowercase().replace([' ', '-'], "_");
                norm.parse::<Finding>().ok().map(|f| (h.to_string(), f))
            })
            .collect();
        ColumnMap {
            id_column: id_column.to_string(),
            columns,
        }
    }
}

pub fn parse_binary_labels(
    content: &str,
    source_path: &str,
    map: &ColumnMap,
) -> Result<Corpus, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(content.as_bytes());
    let headers = reader.headers()?.clone();
    let locate = |name: &str| -> Result<usize, CorpusError> {
        let hits: Vec<usize> = headers
            .iter()
            .enumerate()
            .filter(|(_, h)| *h == name)
            .map(|(i, _)| i)
            .collect();
        match hits.len() {
            0 => Err(CorpusError::UnknownColumn(name.to_string())),
            1 => Ok(hits[0]),
            _ => Err(CorpusError::DuplicateColumn(name.to_string())),
        }
    };
    let id_idx = locate(&map.id_column)?;
    let cols: Vec<(usize, &str, Finding)> = map
        .columns
        .iter()
        .map(|(h, f)| locate(h).map(|i| (i, h.as_str(), *f)))
        .collect::<Result<_, _>>()?;

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let row_no = i + 2;
        let id = row.get(id_idx).unwrap_or("").trim().to_string();
        if id.is_empty() {
            return Err(CorpusError::MissingField {
                line: row_no,
                field: "id",
            });
        }
        if !seen.insert(id.clone()) {
            return Err(CorpusError::DuplicateId { id, line: row_no });
        }
        let mut labels: BTreeMap<Finding, FindingLabel> = Finding::ALL
            .iter()
            .map(|f| (*f, FindingLabel::NotMentioned))
            .collect();
        for &(idx, header, finding) in &cols {
            let cell = row.get(idx).unwrap_or("").trim();
            let label = match cell {
                "1" => FindingLabel::Positive,
                "0" => FindingLabel::Negative,
                "" => FindingLabel::NotMentioned,
                other => {
                    return Err(CorpusError::BadCell {
                        row: row_no,
                        column: header.to_string(),
                        value: other.to_string(),
                    })
                }
            };
            labels.insert(finding, label);
        }
        // The raw row stands in for report text so records stay nonempty.
        let text = row.iter().collect::<Vec<_>>().join(",");
        let mut rec = ReportRecord::new(id, text);
        rec.binary_labels = Some(labels);
        records.push(rec);
    }
    Ok(Corpus {
        records,
        source_path: source_path.to_string(),
        schema_version: SCHEMA_VERSION.to_string(),
        unknown_key_warnings: 0,
    })
}

pub fn load_binary_labels(path: &Path, map: &ColumnMap) -> Result<Corpus, CorpusError> {
    let content = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    parse_binary_labels(&content, &path.display().to_string(), map)
}

/// Header row of a CSV file, for building an automatic [`ColumnMap`].
pub fn csv_headers(path: &Path) -> Result<Vec<String>, CorpusError> {
    let mut reader = csv::Reader::from_path(path)?;
    Ok(reader.headers()?.iter().map(str::to_string).collect())
}
