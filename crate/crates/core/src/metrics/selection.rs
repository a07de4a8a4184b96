use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{ExclusionConfig, MetricsError};
use crate::corpus::{Finding, FindingLabel};
use crate::labeler::LabelVector;

/// Definite ground-truth counts for one label.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub negative: usize,
    pub positive: usize,
}

impl ClassCounts {
    pub fn new(negative: usize, positive: usize) -> Self {
        ClassCounts { negative, positive }
    }

    pub fn minority(&self) -> usize {
        self.negative.min(self.positive)
    }

    pub fn total(&self) -> usize {
        self.negative + self.positive
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ExclusionReason {
    /// Listed by name (e.g. overlaps with another label).
    ByName,
    /// Minority class has fewer samples than the count threshold.
    TooFewSamples { minority: usize, threshold: usize },
    /// Minority class fraction is below the fraction threshold.
    LowFraction { fraction: f64, threshold: f64 },
    /// Passed the distribution rules but no (ground truth, prediction) pair is definite.
    NoDefinitePairs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub finding: Finding,
    pub reasons: Vec<ExclusionReason>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub included: BTreeSet<Finding>,
    pub excluded: Vec<Exclusion>,
    pub distribution: BTreeMap<Finding, ClassCounts>,
}

/// Apply the exclusion rules to a precomputed class distribution.
/// Findings missing from the map count as 0/0.
pub fn select_from_distribution(
    distribution: &BTreeMap<Finding, ClassCounts>,
    config: &ExclusionConfig,
) -> Selection {
    let mut included = BTreeSet::new();
    let mut excluded = Vec::new();
    let mut full = BTreeMap::new();
    for f in Finding::ALL {
        let counts = distribution.get(&f).copied().unwrap_or_default();
        full.insert(f, counts);
        let mut reasons = Vec::new();
        if config.name_excluded.contains(&f) {
            reasons.push(ExclusionReason::ByName);
        }
        let minority = counts.minority();
        if minority < config.min_class_count {
            reasons.push(ExclusionReason::TooFewSamples {
                minority,
                threshold: config.min_class_count,
            });
        }
        if let Some(threshold) = config.min_class_fraction {
            let fraction = if counts.total() == 0 {
                0.0
            } else {
                minority as f64 / counts.total() as f64
            };
            if fraction < threshold {
                reasons.push(ExclusionReason::LowFraction {
                    fraction,
                    threshold,
                });
            }
        }
        if reasons.is_empty() {
            included.insert(f);
        } else {
            excluded.push(Exclusion {
                finding: f,
                reasons,
            });
        }
    }
    Selection {
        included,
        excluded,
        distribution: full,
    }
}

/// Count definite ground-truth labels per finding and apply the exclusion rules.
pub fn select_labels(
    gt: &[LabelVector],
    config: &ExclusionConfig,
) -> Result<Selection, MetricsError> {
    if gt.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut distribution: BTreeMap<Finding, ClassCounts> = BTreeMap::new();
    for v in gt {
        for (f, l) in v.iter() {
            let c = distribution.entry(f).or_default();
            match l {
                FindingLabel::Positive => c.positive += 1,
                FindingLabel::Negative => c.negative += 1,
                _ => {}
            }
        }
    }
    Ok(select_from_distribution(&distribution, config))
}
