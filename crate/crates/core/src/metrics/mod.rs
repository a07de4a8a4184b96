//! Label comparison and the statistics behind the result tables.

mod bootstrap;
mod chisq;
mod cochran;
mod confusion;
mod evaluate;
mod selection;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Finding;
use crate::labeler::LabelError;
use crate::normalizer::NormalizeError;

pub use bootstrap::{
    bootstrap_ci, bootstrap_many, percentile_nearest_rank, BootstrapConfig, BootstrapResult,
    BootstrapTarget, PairTable,
};
pub use chisq::{chi_square_sf, ln_gamma};
pub use cochran::{cochran_q, CochranQResult};
pub use confusion::{
    average_f1, confusion_from_pairs, prf1, AverageMode, ConfusionCounts, PairOutcome, Prf1,
};
pub use evaluate::{
    evaluate, evaluate_vectors, label_corpus, render_markdown, EvalConfig, LabelMetrics,
    MetricsReport,
};
pub use selection::{
    select_from_distribution, select_labels, ClassCounts, Exclusion, ExclusionReason, Selection,
};

/// Which labels take part in scoring, and how unmentioned labels are treated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionConfig {
    /// Exclude a label when its minority class fraction is below this value.
    /// `None` disables the fraction rule.
    pub min_class_fraction: Option<f64>,
    /// Exclude a label when either class has fewer definite samples.
    pub min_class_count: usize,
    pub name_excluded: BTreeSet<Finding>,
    pub treat_not_mentioned_as_uncertain: bool,
}

impl Default for ExclusionConfig {
    fn default() -> Self {
        ExclusionConfig::mimic_chexpert()
    }
}

impl ExclusionConfig {
    /// Count rule (10) and fraction rule (5%).
    pub fn mimic_chexpert() -> Self {
        ExclusionConfig {
            min_class_fraction: Some(0.05),
            min_class_count: 10,
            name_excluded: [Finding::EnlargedCardiomediastinum, Finding::NoFinding]
                .into_iter()
                .collect(),
            treat_not_mentioned_as_uncertain: true,
        }
    }

    /// Count rule only.
    pub fn indiana() -> Self {
        ExclusionConfig {
            min_class_fraction: None,
            ..ExclusionConfig::mimic_chexpert()
        }
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        if let Some(f) = self.min_class_fraction {
            if !(0.0..1.0).contains(&f) {
                return Err(MetricsError::BadConfig(format!(
                    "min_class_fraction must be in [0, 1), got {f}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no label vectors given")]
    EmptyInput,
    #[error("ground truth has {gt} vectors but predictions have {pred}")]
    LengthMismatch { gt: usize, pred: usize },
    #[error("nothing to average: no included label has a defined F1")]
    NothingToAverage,
    #[error("every bootstrap resample gave an undefined statistic")]
    AllResamplesUndefined,
    #[error("bootstrap needs at least one iteration")]
    NoIterations,
    #[error("prediction id `{0}` not found in ground truth")]
    Alignment(String),
    #[error("chi-square domain error: {0}")]
    Domain(String),
    #[error("invalid outcome matrix: {0}")]
    BadMatrix(String),
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Normalize(#[from] NormalizeError),
    #[error(transparent)]
    Label(#[from] LabelError),
}
