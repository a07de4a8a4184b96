use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{DateTime, Utc};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::StudyError;
use crate::corpus::{Corpus, ReportRecord};

const STREAM_SAMPLE: u64 = 0;
const STREAM_SHUFFLE: u64 = 1;
const STREAM_TOKENS: u64 = 2;
const STREAM_RATER_BASE: u64 = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Model,
    GroundTruth,
}

/// One image + report pair. Unblinded; never sent to a rater as-is.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyItem {
    /// Path of the image relative to the image root.
    pub image_ref: String,
    /// Random per-item token under which the image is served.
    pub image_token: String,
    pub record_id: String,
    pub condition: Condition,
    pub report_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudySession {
    pub session_id: String,
    pub items: Vec<StudyItem>,
    pub raters: Vec<String>,
    /// Per-rater presentation order: position -> item index.
    pub orders: BTreeMap<String, Vec<usize>>,
    pub seed: u64,
    pub n_abnormal: usize,
    pub n_normal: usize,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionConfig {
    pub n_abnormal: usize,
    pub n_normal: usize,
    pub raters: Vec<String>,
    pub seed: u64,
    pub created_at: DateTime<Utc>,
}

impl SessionConfig {
    pub fn new(raters: Vec<String>, seed: u64, created_at: DateTime<Utc>) -> Self {
        SessionConfig {
            n_abnormal: 25,
            n_normal: 25,
            raters,
            seed,
            created_at,
        }
    }
}

/// What a rater sees. Carries nothing that identifies the condition or the record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Presentation {
    pub image_ref: String,
    pub report_text: String,
    pub position: usize,
    pub total: usize,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn check_fields(r: &ReportRecord) -> Result<(), StudyError> {
    let missing = |field| StudyError::MissingField {
        record_id: r.id.clone(),
        field,
    };
    if r.image_ref.as_deref().is_none_or(|s| s.trim().is_empty()) {
        return Err(missing("image"));
    }
    if r.ground_truth_text
        .as_deref()
        .is_none_or(|s| s.trim().is_empty())
    {
        return Err(missing("ground_truth_text"));
    }
    Ok(())
}

/// Sample `n_abnormal` + `n_normal` records and build two items per record,
/// one for each condition. Records without an `abnormal` flag are ignored.
pub fn create_session(corpus: &Corpus, config: &SessionConfig) -> Result<StudySession, StudyError> {
    if config.raters.is_empty() {
        return Err(StudyError::NoRaters);
    }
    let mut seen = BTreeSet::new();
    for r in &config.raters {
        if !seen.insert(r) {
            return Err(StudyError::DuplicateRater(r.clone()));
        }
    }
    let abnormal: Vec<&ReportRecord> = corpus
        .records
        .iter()
        .filter(|r| r.abnormal == Some(true))
        .collect();
    let normal: Vec<&ReportRecord> = corpus
        .records
        .iter()
        .filter(|r| r.abnormal == Some(false))
        .collect();
    for (class, pool, needed) in [
        ("abnormal", &abnormal, config.n_abnormal),
        ("normal", &normal, config.n_normal),
    ] {
        if pool.len() < needed {
            return Err(StudyError::InsufficientRecords {
                class,
                needed,
                available: pool.len(),
            });
        }
    }
    for r in abnormal.iter().chain(&normal) {
        check_fields(r)?;
    }

    let mut rng = stream(config.seed, STREAM_SAMPLE);
    let mut sampled: Vec<&ReportRecord> = Vec::new();
    for (pool, n) in [(&abnormal, config.n_abnormal), (&normal, config.n_normal)] {
        let mut picks = index::sample(&mut rng, pool.len(), n).into_vec();
        picks.sort_unstable();
        sampled.extend(picks.into_iter().map(|i| pool[i]));
    }

    let mut items: Vec<StudyItem> = Vec::with_capacity(sampled.len() * 2);
    for r in &sampled {
        let image_ref = r.image_ref.clone().unwrap_or_default();
        for (condition, text) in [
            (Condition::Model, r.text.clone()),
            (
                Condition::GroundTruth,
                r.ground_truth_text.clone().unwrap_or_default(),
            ),
        ] {
            items.push(StudyItem {
                image_ref: image_ref.clone(),
                image_token: String::new(),
                record_id: r.id.clone(),
                condition,
                report_text: text,
            });
        }
    }
    items.shuffle(&mut stream(config.seed, STREAM_SHUFFLE));

    let mut tokens = stream(config.seed, STREAM_TOKENS);
    let session_id = format!("{:016x}", tokens.random::<u64>());
    for item in &mut items {
        item.image_token = format!("{:032x}", tokens.random::<u128>());
    }

    let orders = config
        .raters
        .iter()
        .enumerate()
        .map(|(i, rater)| {
            let mut order: Vec<usize> = (0..items.len()).collect();
            order.shuffle(&mut stream(config.seed, STREAM_RATER_BASE + i as u64));
            (rater.clone(), order)
        })
        .collect();

    Ok(StudySession {
        session_id,
        items,
        raters: config.raters.clone(),
        orders,
        seed: config.seed,
        n_abnormal: config.n_abnormal,
        n_normal: config.n_normal,
        created_at: config.created_at,
    })
}

impl StudySession {
    pub fn total_items(&self) -> usize {
        self.items.len()
    }

    pub fn expected_ratings(&self) -> usize {
        self.items.len() * self.raters.len()
    }

    fn order(&self, rater: &str) -> Result<&[usize], StudyError> {
        self.orders
            .get(rater)
            .map(Vec::as_slice)
            .ok_or_else(|| StudyError::UnknownRater(rater.to_string()))
    }

    /// Item index shown to `rater` at `position`.
    pub fn item_at(&self, rater: &str, position: usize) -> Result<usize, StudyError> {
        let order = self.order(rater)?;
        order
            .get(position)
            .copied()
            .ok_or(StudyError::PositionOutOfRange {
                pos: position,
                total: order.len(),
            })
    }

    /// Position at which `rater` sees `item_index`.
    pub fn position_of(&self, rater: &str, item_index: usize) -> Result<usize, StudyError> {
        let order = self.order(rater)?;
        order
            .iter()
            .position(|&i| i == item_index)
            .ok_or(StudyError::PositionOutOfRange {
                pos: item_index,
                total: order.len(),
            })
    }

    pub fn present_item(&self, rater: &str, position: usize) -> Result<Presentation, StudyError> {
        let item = &self.items[self.item_at(rater, position)?];
        Ok(Presentation {
            image_ref: format!("/images/{}", item.image_token),
            report_text: item.report_text.clone(),
            position,
            total: self.items.len(),
        })
    }

    /// Image path for a served token.
    pub fn image_for_token(&self, token: &str) -> Option<&str> {
        self.items
            .iter()
            .find(|i| i.image_token == token)
            .map(|i| i.image_ref.as_str())
    }

    pub fn save(&self, path: &Path) -> Result<(), StudyError> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, StudyError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use chrono::TimeZone;

    pub(crate) fn fixed_time() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2024, 3, 1, 9, 0, 0).unwrap()
    }

    pub(crate) fn study_corpus(n_abnormal: usize, n_normal: usize) -> Corpus {
        let mut records = Vec::new();
        for i in 0..n_abnormal + n_normal {
            let abnormal = i < n_abnormal;
            let mut r = ReportRecord::new(
                format!("patient_q{i}"),
                if abnormal {
                    format!("Findings: Small right pleural effusion. Case {i} generated.")
                } else {
                    format!("Findings: Lungs are clear. Case {i} generated.")
                },
            );
            r.ground_truth_text = Some(format!("Findings: Reference reading for case {i}."));
            r.abnormal = Some(abnormal);
            r.image_ref = Some(format!("img/patient_q{i}.png"));
            records.push(r);
        }
        Corpus::from_records(records).unwrap()
    }

    pub(crate) fn raters(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("r{i}")).collect()
    }

    fn session(seed: u64) -> StudySession {
        create_session(
            &study_corpus(40, 40),
            &SessionConfig::new(raters(3), seed, fixed_time()),
        )
        .unwrap()
    }

    #[test]
    fn default_design_sizes() {
        let s = session(1);
        assert_eq!(s.total_items(), 100);
        assert_eq!(s.expected_ratings(), 300);
        for order in s.orders.values() {
            let mut sorted = order.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, (0..100).collect::<Vec<_>>());
        }
    }

    #[test]
    fn each_record_appears_once_per_condition() {
        let s = session(2);
        let mut per_record: BTreeMap<&str, Vec<Condition>> = BTreeMap::new();
        for item in &s.items {
            per_record
                .entry(&item.record_id)
                .or_default()
                .push(item.condition);
        }
        assert_eq!(per_record.len(), 50);
        for conds in per_record.values() {
            let set: BTreeSet<_> = conds.iter().collect();
            assert_eq!((conds.len(), set.len()), (2, 2));
        }
        let corpus = study_corpus(40, 40);
        let abnormal = per_record
            .keys()
            .filter(|id| corpus.get(id).unwrap().abnormal == Some(true))
            .count();
        assert_eq!(abnormal, 25);
    }

    #[test]
    fn deterministic() {
        assert_eq!(session(7), session(7));
        assert_ne!(session(7).items, session(8).items);
    }

    #[test]
    fn insufficient_records() {
        let err = create_session(
            &study_corpus(10, 40),
            &SessionConfig::new(raters(3), 1, fixed_time()),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            StudyError::InsufficientRecords {
                class: "abnormal",
                needed: 25,
                available: 10
            }
        ));
        assert!(err.to_string().contains("short by 15"));
    }

    #[test]
    fn missing_image() {
        let mut corpus = study_corpus(30, 30);
        corpus.records[3].image_ref = None;
        let err =
            create_session(&corpus, &SessionConfig::new(raters(1), 1, fixed_time())).unwrap_err();
        assert!(matches!(
            err,
            StudyError::MissingField { field: "image", .. }
        ));
    }

    #[test]
    fn bad_raters() {
        let corpus = study_corpus(30, 30);
        assert!(matches!(
            create_session(&corpus, &SessionConfig::new(vec![], 1, fixed_time())),
            Err(StudyError::NoRaters)
        ));
        assert!(matches!(
            create_session(
                &corpus,
                &SessionConfig::new(vec!["a".into(), "a".into()], 1, fixed_time())
            ),
            Err(StudyError::DuplicateRater(_))
        ));
    }

    #[test]
    fn presentation_bounds() {
        let s = session(3);
        assert!(s.present_item("r1", 0).is_ok());
        assert!(matches!(
            s.present_item("r1", 100),
            Err(StudyError::PositionOutOfRange {
                pos: 100,
                total: 100
            })
        ));
        assert!(matches!(
            s.present_item("zz", 0),
            Err(StudyError::UnknownRater(_))
        ));
    }

    #[test]
    fn payloads_are_blind() {
        for seed in 0..100 {
            let s = session(seed);
            for rater in &s.raters {
                let mut images = BTreeSet::new();
                for pos in 0..s.total_items() {
                    let p = s.present_item(rater, pos).unwrap();
                    let json = serde_json::to_string(&p).unwrap();
                    assert!(
                        !json.contains("model") && !json.contains("ground_truth"),
                        "{json}"
                    );
                    assert!(!json.contains("patient_q"), "{json}");
                    assert!(
                        images.insert(p.image_ref.clone()),
                        "image url repeated: {}",
                        p.image_ref
                    );
                }
            }
        }
    }

    #[test]
    fn rater_orders_are_independent() {
        let corpus = study_corpus(30, 30);
        let trials = 1000;
        let mut equal = 0;
        for seed in 0..trials {
            let s = create_session(&corpus, &SessionConfig::new(raters(2), seed, fixed_time()))
                .unwrap();
            if s.item_at("r1", 0).unwrap() == s.item_at("r2", 0).unwrap() {
                equal += 1;
            }
        }
        // expected 10 of 1000; 0..=25 covers far beyond 3 standard deviations
        assert!(equal <= 25, "{equal}");
        let p = equal as f64 / trials as f64;
        assert!((p - 0.01).abs() < 0.015, "{p}");
    }

    #[test]
    fn token_lookup_and_round_trip() {
        let s = session(4);
        let item = &s.items[0];
        assert_eq!(
            s.image_for_token(&item.image_token),
            Some(item.image_ref.as_str())
        );
        assert_eq!(s.image_for_token("nope"), None);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("session.json");
        s.save(&path).unwrap();
        assert_eq!(StudySession::load(&path).unwrap(), s);
    }
}
