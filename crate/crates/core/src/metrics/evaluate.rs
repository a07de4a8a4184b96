use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bootstrap::{bootstrap_many, BootstrapConfig, BootstrapTarget, PairTable};
use super::confusion::{prf1, ConfusionCounts};
use super::selection::{select_labels, ClassCounts, Exclusion, ExclusionReason};
use super::{ExclusionConfig, MetricsError};
use crate::corpus::{Corpus, Finding, ReportRecord};
use crate::labeler::{LabelVector, Labeler, Lexicon};
use crate::normalizer::extract_sections;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub exclusion: ExclusionConfig,
    pub bootstrap: BootstrapConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub counts: ConfusionCounts,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub ci: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_label: BTreeMap<Finding, LabelMetrics>,
    pub macro_f1: Option<f64>,
    pub micro_f1: Option<f64>,
    pub macro_ci: Option<(f64, f64)>,
    pub micro_ci: Option<(f64, f64)>,
    pub excluded: Vec<Exclusion>,
    pub distribution: BTreeMap<Finding, ClassCounts>,
    pub config_echo: EvalConfig,
    pub seed: u64,
    pub iterations: usize,
    pub level: f64,
    pub n_pairs: usize,
}

fn label_record(record: &ReportRecord, labeler: &Labeler) -> Result<LabelVector, MetricsError> {
    if let Some(labels) = &record.binary_labels {
        return Ok(LabelVector::from_labels(labels));
    }
    let report = extract_sections(&record.id, &record.text)?;
    Ok(labeler.label(&report)?)
}

/// Label every record, in corpus order. Records carrying binary labels are
/// taken as-is; the others go through section extraction and the labeler.
pub fn label_corpus(corpus: &Corpus, lexicon: &Lexicon) -> Result<Vec<LabelVector>, MetricsError> {
    let labeler = Labeler::new(lexicon);
    corpus
        .records
        .par_iter()
        .map(|r| label_record(r, &labeler))
        .collect()
}

/// Score predictions against ground truth. Pairs follow prediction order;
/// every prediction id must exist in the ground truth.
pub fn evaluate(
    gt: &Corpus,
    pred: &Corpus,
    lexicon: &Lexicon,
    config: &EvalConfig,
) -> Result<MetricsReport, MetricsError> {
    config.exclusion.validate()?;
    if pred.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let gt_index: HashMap<&str, &ReportRecord> = gt.index_by_id();
    let aligned: Vec<&ReportRecord> = pred
        .records
        .iter()
        .map(|p| {
            gt_index
                .get(p.id.as_str())
                .copied()
                .ok_or_else(|| MetricsError::Alignment(p.id.clone()))
        })
        .collect::<Result<_, _>>()?;
    let labeler = Labeler::new(lexicon);
    let gt_vectors = aligned
        .par_iter()
        .map(|r| label_record(r, &labeler))
        .collect::<Result<Vec<_>, _>>()?;
    let pred_vectors = label_corpus(pred, lexicon)?;
    evaluate_vectors(&gt_vectors, &pred_vectors, config)
}

/// Scoring on already-labelled, index-aligned vectors.
pub fn evaluate_vectors(
    gt: &[LabelVector],
    pred: &[LabelVector],
    config: &EvalConfig,
) -> Result<MetricsReport, MetricsError> {
    config.exclusion.validate()?;
    if gt.len() != pred.len() {
        return Err(MetricsError::LengthMismatch {
            gt: gt.len(),
            pred: pred.len(),
        });
    }
    let selection = select_labels(gt, &config.exclusion)?;
    let mut excluded = selection.excluded;

    let candidates: Vec<Finding> = selection.included.iter().copied().collect();
    let full = PairTable::new(gt, pred, &candidates, &config.exclusion)?;
    let full_counts = full.counts();
    let mut included = Vec::new();
    for (f, c) in candidates.iter().zip(&full_counts) {
        if c.n_pairs_used == 0 {
            excluded.push(Exclusion {
                finding: *f,
                reasons: vec![ExclusionReason::NoDefinitePairs],
            });
        } else {
            included.push(*f);
        }
    }
    excluded.sort_by_key(|e| e.finding);

    let table = PairTable::new(gt, pred, &included, &config.exclusion)?;
    let counts = table.counts();
    let mut targets: Vec<BootstrapTarget> = included
        .iter()
        .map(|f| BootstrapTarget::Label(*f))
        .collect();
    targets.push(BootstrapTarget::Macro);
    targets.push(BootstrapTarget::Micro);

    let point: Vec<Option<f64>> = targets
        .iter()
        .map(|t| t.statistic(&included, &counts))
        .collect();
    let intervals = if included.is_empty() {
        vec![]
    } else {
        bootstrap_many(&table, &targets, &config.bootstrap)?
    };
    let ci = |j: usize| -> Option<(f64, f64)> {
        point[j]?;
        match intervals.get(j)? {
            Ok(r) => Some((r.lo, r.hi)),
            Err(_) => None,
        }
    };

    let per_label = included
        .iter()
        .zip(&counts)
        .enumerate()
        .map(|(j, (f, c))| {
            let m = prf1(c);
            (
                *f,
                LabelMetrics {
                    counts: *c,
                    precision: m.precision,
                    recall: m.recall,
                    f1: m.f1,
                    ci: ci(j),
                },
            )
        })
        .collect();
    let k = included.len();
    Ok(MetricsReport {
        per_label,
        macro_f1: point[k],
        micro_f1: point[k + 1],
        macro_ci: ci(k),
        micro_ci: ci(k + 1),
        excluded,
        distribution: selection.distribution,
        config_echo: config.clone(),
        seed: config.bootstrap.seed,
        iterations: config.bootstrap.iterations,
        level: config.bootstrap.level,
        n_pairs: gt.len(),
    })
}

fn cell(value: Option<f64>, ci: Option<(f64, f64)>) -> String {
    match (value, ci) {
        (Some(v), Some((lo, hi))) => format!("{v:.2} ({lo:.2}, {hi:.2})"),
        (Some(v), None) => format!("{v:.2}"),
        (None, _) => "n/a".to_string(),
    }
}

/// Markdown table with "F1 (lo, hi)" cells.
pub fn render_markdown(report: &MetricsReport) -> String {
    let pct = report.level * 100.0;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "| Label | F1 ({pct:.0}% CI) | Precision | Recall | Pairs |"
    );
    out.push_str("|---|---|---|---|---|\n");
    for (f, m) in &report.per_label {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} |",
            f.display_name(),
            cell(m.f1, m.ci),
            cell(m.precision, None),
            cell(m.recall, None),
            m.counts.n_pairs_used
        );
    }
    let _ = writeln!(
        out,
        "| Average (micro) | {} | | | |",
        cell(report.micro_f1, report.micro_ci)
    );
    let _ = writeln!(
        out,
        "| Average (macro) | {} | | | |",
        cell(report.macro_f1, report.macro_ci)
    );
    if !report.excluded.is_empty() {
        let names: Vec<&str> = report
            .excluded
            .iter()
            .map(|e| e.finding.display_name())
            .collect();
        let _ = writeln!(out, "\nExcluded: {}", names.join(", "));
    }
    out
}
