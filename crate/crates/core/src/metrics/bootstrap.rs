use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::confusion::{prf1, ConfusionCounts, PairOutcome};
use super::{ExclusionConfig, MetricsError};
use crate::corpus::Finding;
use crate::labeler::LabelVector;

/// Per-report outcomes for a fixed list of findings. Bootstrap resamples rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairTable {
    findings: Vec<Finding>,
    rows: Vec<Vec<PairOutcome>>,
}

impl PairTable {
    pub fn new(
        gt: &[LabelVector],
        pred: &[LabelVector],
        findings: &[Finding],
        config: &ExclusionConfig,
    ) -> Result<Self, MetricsError> {
        if gt.len() != pred.len() {
            return Err(MetricsError::LengthMismatch {
                gt: gt.len(),
                pred: pred.len(),
            });
        }
        let rows = gt
            .iter()
            .zip(pred)
            .map(|(g, p)| {
                findings
                    .iter()
                    .map(|&f| {
                        PairOutcome::classify(
                            g.get(f),
                            p.get(f),
                            config.treat_not_mentioned_as_uncertain,
                        )
                    })
                    .collect()
            })
            .collect();
        Ok(PairTable {
            findings: findings.to_vec(),
            rows,
        })
    }

    /// Build directly from outcomes; every row must have one entry per finding.
    pub fn from_rows(
        findings: Vec<Finding>,
        rows: Vec<Vec<PairOutcome>>,
    ) -> Result<Self, MetricsError> {
        if let Some(i) = rows.iter().position(|r| r.len() != findings.len()) {
            return Err(MetricsError::BadMatrix(format!(
                "row {i} has {} outcomes for {} findings",
                rows[i].len(),
                findings.len()
            )));
        }
        Ok(PairTable { findings, rows })
    }

    pub fn n_reports(&self) -> usize {
        self.rows.len()
    }

    pub fn findings(&self) -> &[Finding] {
        &self.findings
    }

    /// Per-finding counts over the given row indices (repeats allowed).
    pub fn counts_for<I: IntoIterator<Item = usize>>(&self, indices: I) -> Vec<ConfusionCounts> {
        let mut out = vec![ConfusionCounts::default(); self.findings.len()];
        for i in indices {
            for (c, &o) in out.iter_mut().zip(&self.rows[i]) {
                c.add(o);
            }
        }
        out
    }

    pub fn counts(&self) -> Vec<ConfusionCounts> {
        self.counts_for(0..self.rows.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapTarget {
    Label(Finding),
    Macro,
    Micro,
}

impl BootstrapTarget {
    /// The statistic on a set of per-finding counts; `None` when undefined.
    pub fn statistic(&self, findings: &[Finding], counts: &[ConfusionCounts]) -> Option<f64> {
        match self {
            BootstrapTarget::Label(f) => {
                let i = findings.iter().position(|x| x == f)?;
                prf1(&counts[i]).f1
            }
            BootstrapTarget::Macro => {
                let defined: Vec<f64> = counts.iter().filter_map(|c| prf1(c).f1).collect();
                if defined.is_empty() {
                    None
                } else {
                    Some(defined.iter().sum::<f64>() / defined.len() as f64)
                }
            }
            BootstrapTarget::Micro => {
                let mut pooled = ConfusionCounts::default();
                for c in counts {
                    pooled.tp += c.tp;
                    pooled.fp += c.fp;
                    pooled.fn_ += c.fn_;
                }
                prf1(&pooled).f1
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub iterations: usize,
    pub seed: u64,
    pub level: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            iterations: 1000,
            seed: 0,
            level: 0.95,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub lo: f64,
    pub hi: f64,
    pub n_defined: usize,
    pub n_undefined: usize,
}

/// Nearest-rank percentile of sorted values, `q` in (0, 1].
pub fn percentile_nearest_rank(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let m = sorted.len();
    let rank = ((q * m as f64) - 1e-9).ceil().max(1.0) as usize;
    Some(sorted[rank.min(m) - 1])
}

/// The random stream for one iteration depends only on (seed, iteration).
fn resample(n: usize, seed: u64, iteration: usize) -> impl Iterator<Item = usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration as u64);
    (0..n).map(move |_| rng.random_range(0..n))
}

/// Percentile intervals for several targets computed on one shared resample set.
pub fn bootstrap_many(
    table: &PairTable,
    targets: &[BootstrapTarget],
    config: &BootstrapConfig,
) -> Result<Vec<Result<BootstrapResult, MetricsError>>, MetricsError> {
    if config.iterations == 0 {
        return Err(MetricsError::NoIterations);
    }
    if !(config.level > 0.0 && config.level < 1.0) {
        return Err(MetricsError::BadConfig(format!(
            "level must be in (0, 1), got {}",
            config.level
        )));
    }
    let n = table.n_reports();
    if n == 0 {
        return Err(MetricsError::EmptyInput);
    }
    let samples: Vec<Vec<Option<f64>>> = (0..config.iterations)
        .into_par_iter()
        .map(|it| {
            let counts = table.counts_for(resample(n, config.seed, it));
            targets
                .iter()
                .map(|t| t.statistic(&table.findings, &counts))
                .collect()
        })
        .collect();

    let tail = (1.0 - config.level) / 2.0;
    Ok((0..targets.len())
        .map(|j| {
            let mut values: Vec<f64> = samples.iter().filter_map(|s| s[j]).collect();
            let n_undefined = samples.len() - values.len();
            if values.is_empty() {
                return Err(MetricsError::AllResamplesUndefined);
            }
            values.sort_by(f64::total_cmp);
            Ok(BootstrapResult {
                lo: percentile_nearest_rank(&values, tail).unwrap(),
                hi: percentile_nearest_rank(&values, 1.0 - tail).unwrap(),
                n_defined: values.len(),
                n_undefined,
            })
        })
        .collect())
}

pub fn bootstrap_ci(
    table: &PairTable,
    target: BootstrapTarget,
    config: &BootstrapConfig,
) -> Result<BootstrapResult, MetricsError> {
    bootstrap_many(table, &[target], config)?.pop().unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::FindingLabel::{self, *};
    use proptest::prelude::*;

    fn vectors(labels: &[FindingLabel]) -> Vec<LabelVector> {
        labels
            .iter()
            .map(|l| {
                let mut v = LabelVector::default();
                v.set(Finding::Edema, *l);
                v
            })
            .collect()
    }

    fn table(gt: &[FindingLabel], pred: &[FindingLabel]) -> PairTable {
        PairTable::new(
            &vectors(gt),
            &vectors(pred),
            &[Finding::Edema],
            &ExclusionConfig::default(),
        )
        .unwrap()
    }

    /// Exact bootstrap distribution by enumerating all n^n resamples.
    fn exhaustive(table: &PairTable, target: BootstrapTarget, level: f64) -> (f64, f64) {
        let n = table.n_reports();
        let total = n.pow(n as u32);
        let mut weighted: Vec<f64> = Vec::new();
        for code in 0..total {
            let idx: Vec<usize> = (0..n).map(|k| (code / n.pow(k as u32)) % n).collect();
            if let Some(v) = target.statistic(table.findings(), &table.counts_for(idx)) {
                weighted.push(v);
            }
        }
        weighted.sort_by(f64::total_cmp);
        let tail = (1.0 - level) / 2.0;
        (
            percentile_nearest_rank(&weighted, tail).unwrap(),
            percentile_nearest_rank(&weighted, 1.0 - tail).unwrap(),
        )
    }

    #[test]
    fn nearest_rank() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile_nearest_rank(&v, 0.025), Some(3.0));
        assert_eq!(percentile_nearest_rank(&v, 0.975), Some(98.0));
        assert_eq!(percentile_nearest_rank(&v, 0.5), Some(50.0));
        assert_eq!(percentile_nearest_rank(&[7.0], 0.025), Some(7.0));
        assert_eq!(percentile_nearest_rank(&[], 0.5), None);
    }

    #[test]
    fn three_reports_match_enumeration() {
        let t = table(
            &[Positive, Positive, Negative],
            &[Positive, Negative, Negative],
        );
        let (lo, hi) = exhaustive(&t, BootstrapTarget::Label(Finding::Edema), 0.95);
        assert_eq!((lo, hi), (0.5, 1.0));
        let cfg = BootstrapConfig {
            iterations: 10_000,
            seed: 11,
            level: 0.95,
        };
        let r = bootstrap_ci(&t, BootstrapTarget::Label(Finding::Edema), &cfg).unwrap();
        assert_eq!((r.lo, r.hi), (lo, hi));
        assert_eq!(r.n_defined + r.n_undefined, 10_000);
        assert!(r.n_undefined > 0);
    }

    #[test]
    fn all_correct_is_degenerate_at_one() {
        let labels = [
            Positive, Negative, Positive, Positive, Negative, Negative, Positive, Negative,
        ];
        let t = table(&labels, &labels);
        for target in [
            BootstrapTarget::Label(Finding::Edema),
            BootstrapTarget::Macro,
            BootstrapTarget::Micro,
        ] {
            let r = bootstrap_ci(&t, target, &BootstrapConfig::default()).unwrap();
            assert_eq!((r.lo, r.hi), (1.0, 1.0));
        }
    }

    #[test]
    fn all_undefined() {
        let t = table(&[Negative, Negative], &[Negative, Negative]);
        let err = bootstrap_ci(
            &t,
            BootstrapTarget::Label(Finding::Edema),
            &BootstrapConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, MetricsError::AllResamplesUndefined));
    }

    #[test]
    fn zero_iterations() {
        let t = table(&[Positive], &[Positive]);
        let cfg = BootstrapConfig {
            iterations: 0,
            ..Default::default()
        };
        assert!(matches!(
            bootstrap_ci(&t, BootstrapTarget::Micro, &cfg),
            Err(MetricsError::NoIterations)
        ));
    }

    #[test]
    fn same_result_on_any_thread_count() {
        let gt: Vec<_> = (0..60)
            .map(|i| if i % 3 == 0 { Negative } else { Positive })
            .collect();
        let pred: Vec<_> = (0..60)
            .map(|i| if i % 5 == 0 { Negative } else { Positive })
            .collect();
        let t = table(&gt, &pred);
        let cfg = BootstrapConfig {
            iterations: 2000,
            seed: 99,
            level: 0.95,
        };
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| bootstrap_ci(&t, BootstrapTarget::Micro, &cfg).unwrap())
        };
        let one = run(1);
        assert_eq!(one, run(4));
        assert_eq!(one, run(8));
    }

    fn label() -> impl Strategy<Value = FindingLabel> {
        prop::sample::select(vec![Positive, Negative])
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn interval_brackets_point_estimate(
            pairs in prop::collection::vec((label(), label()), 20..80),
            seed in any::<u64>(),
        ) {
            let gt: Vec<_> = pairs.iter().map(|p| p.0).collect();
            let pred: Vec<_> = pairs.iter().map(|p| p.1).collect();
            let t = table(&gt, &pred);
            let target = BootstrapTarget::Label(Finding::Edema);
            if let Some(point) = target.statistic(t.findings(), &t.counts()) {
                let cfg = BootstrapConfig { iterations: 200, seed, level: 0.95 };
                let r = bootstrap_ci(&t, target, &cfg).unwrap();
                prop_assert!(0.0 <= r.lo && r.lo <= point && point <= r.hi && r.hi <= 1.0,
                    "{} {} {}", r.lo, point, r.hi);
            }
        }
    }
}
