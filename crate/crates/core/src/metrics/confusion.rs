use serde::{Deserialize, Serialize};

use super::{ExclusionConfig, MetricsError};
use crate::corpus::{Finding, FindingLabel};
use crate::labeler::LabelVector;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub n_pairs_used: u64,
    pub n_pairs_skipped: u64,
}

impl ConfusionCounts {
    pub fn add(&mut self, outcome: PairOutcome) {
        match outcome {
            PairOutcome::Tp => self.tp += 1,
            PairOutcome::Fp => self.fp += 1,
            PairOutcome::Fn => self.fn_ += 1,
            PairOutcome::Tn => self.tn += 1,
            PairOutcome::Skipped => {
                self.n_pairs_skipped += 1;
                return;
            }
        }
        self.n_pairs_used += 1;
    }
}

/// Contribution of one (ground truth, prediction) label pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PairOutcome {
    Tp,
    Fp,
    Fn,
    Tn,
    Skipped,
}

impl PairOutcome {
    /// Only pairs where both sides are definite count.
    pub fn classify(
        gt: FindingLabel,
        pred: FindingLabel,
        not_mentioned_as_uncertain: bool,
    ) -> Self {
        let conflate = |l: FindingLabel| {
            if not_mentioned_as_uncertain && l == FindingLabel::NotMentioned {
                FindingLabel::Uncertain
            } else {
                l
            }
        };
        use FindingLabel::{Negative as N, Positive as P};
        match (conflate(gt), conflate(pred)) {
            (P, P) => PairOutcome::Tp,
            (N, P) => PairOutcome::Fp,
            (P, N) => PairOutcome::Fn,
            (N, N) => PairOutcome::Tn,
            _ => PairOutcome::Skipped,
        }
    }
}

pub fn confusion_from_pairs(
    gt: &[LabelVector],
    pred: &[LabelVector],
    finding: Finding,
    config: &ExclusionConfig,
) -> Result<ConfusionCounts, MetricsError> {
    if gt.len() != pred.len() {
        return Err(MetricsError::LengthMismatch {
            gt: gt.len(),
            pred: pred.len(),
        });
    }
    let mut counts = ConfusionCounts::default();
    for (g, p) in gt.iter().zip(pred) {
        counts.add(PairOutcome::classify(
            g.get(finding),
            p.get(finding),
            config.treat_not_mentioned_as_uncertain,
        ));
    }
    Ok(counts)
}

/// Precision, recall and F1; `None` marks an undefined value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf1 {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

/// Precision and recall are undefined when their denominators are zero; F1
/// is undefined when either of them is. When both are defined and both zero
/// (no true positives at all) F1 is 0.
pub fn prf1(c: &ConfusionCounts) -> Prf1 {
    let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    Prf1 {
        precision,
        recall,
        f1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AverageMode {
    /// Unweighted mean of the defined per-label F1 scores.
    Macro,
    /// F1 of the pooled counts.
    Micro,
}

pub fn average_f1(per_label: &[ConfusionCounts], mode: AverageMode) -> Result<f64, MetricsError> {
    match mode {
        AverageMode::Macro => {
            let defined: Vec<f64> = per_label.iter().filter_map(|c| prf1(c).f1).collect();
            if defined.is_empty() {
                return Err(MetricsError::NothingToAverage);
            }
            Ok(defined.iter().sum::<f64>() / defined.len() as f64)
        }
        AverageMode::Micro => {
            let mut pooled = ConfusionCounts::default();
            for c in per_label {
                pooled.tp += c.tp;
                pooled.fp += c.fp;
                pooled.fn_ += c.fn_;
            }
            prf1(&pooled).f1.ok_or(MetricsError::NothingToAverage)
        }
    }
}
