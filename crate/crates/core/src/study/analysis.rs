use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::log::{effective_ratings, Grade, LogEntry};
use super::session::{Condition, StudySession};
use super::StudyError;
use crate::metrics::{cochran_q, CochranQResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub counts: BTreeMap<Grade, usize>,
    /// Percent of the ratings received for this condition.
    pub percentages: BTreeMap<Grade, f64>,
    pub n_ratings: usize,
    /// Grades A + B.
    pub success: usize,
    pub success_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub per_condition: BTreeMap<Condition, ConditionSummary>,
    /// Paired test over (rater, record) subjects rated under both conditions;
    /// `None` when there is no such subject.
    pub cochran_q: Option<CochranQResult>,
    pub n_subjects: usize,
    pub expected_ratings: usize,
    pub received_ratings: usize,
    pub completeness: f64,
}

fn pct(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

fn summarize(grades: &[Grade]) -> ConditionSummary {
    let mut counts: BTreeMap<Grade, usize> = Grade::ALL.iter().map(|g| (*g, 0)).collect();
    for g in grades {
        *counts.get_mut(g).unwrap() += 1;
    }
    let n = grades.len();
    let success = counts[&Grade::A] + counts[&Grade::B];
    ConditionSummary {
        percentages: counts.iter().map(|(g, c)| (*g, pct(*c, n))).collect(),
        counts,
        n_ratings: n,
        success,
        success_pct: pct(success, n),
    }
}

/// Unblind the effective ratings and tabulate them per condition.
pub fn analyze_session(
    session: &StudySession,
    entries: &[LogEntry],
) -> Result<StudySummary, StudyError> {
    if entries.is_empty() {
        return Err(StudyError::EmptyRatings);
    }
    let effective = effective_ratings(entries);
    let mut grades: BTreeMap<Condition, Vec<Grade>> = BTreeMap::new();
    let mut pairs: BTreeMap<(&str, &str), [Option<bool>; 2]> = BTreeMap::new();
    for ((rater, item_index), entry) in &effective {
        if !session.orders.contains_key(rater) {
            return Err(StudyError::UnknownRater(rater.clone()));
        }
        let item = session
            .items
            .get(*item_index)
            .ok_or(StudyError::PositionOutOfRange {
                pos: *item_index,
                total: session.total_items(),
            })?;
        let grade = entry.rating.grade;
        grades.entry(item.condition).or_default().push(grade);
        let slot = match item.condition {
            Condition::Model => 0,
            Condition::GroundTruth => 1,
        };
        pairs
            .entry((rater.as_str(), item.record_id.as_str()))
            .or_default()[slot] = Some(grade.is_success());
    }

    let rows: Vec<Vec<bool>> = pairs
        .values()
        .filter_map(|p| match p {
            [Some(m), Some(g)] => Some(vec![*m, *g]),
            _ => None,
        })
        .collect();
    let cochran = if rows.is_empty() {
        None
    } else {
        Some(cochran_q(&rows).expect("n x 2 matrix is well formed"))
    };

    let per_condition = [Condition::Model, Condition::GroundTruth]
        .into_iter()
        .map(|c| {
            (
                c,
                summarize(grades.get(&c).map(Vec::as_slice).unwrap_or(&[])),
            )
        })
        .collect();
    let expected = session.expected_ratings();
    Ok(StudySummary {
        per_condition,
        cochran_q: cochran,
        n_subjects: rows.len(),
        expected_ratings: expected,
        received_ratings: effective.len(),
        completeness: if expected == 0 {
            0.0
        } else {
            effective.len() as f64 / expected as f64
        },
    })
}

impl StudySummary {
    pub fn to_markdown(&self) -> String {
        let m = &self.per_condition[&Condition::Model];
        let g = &self.per_condition[&Condition::GroundTruth];
        let mut out = String::from("| Grade | Model | Ground truth |\n|---|---|---|\n");
        for grade in Grade::ALL {
            let _ = writeln!(
                out,
                "| {} ({}) | {} ({:.1}%) | {} ({:.1}%) |",
                grade,
                grade.meaning(),
                m.counts[&grade],
                m.percentages[&grade],
                g.counts[&grade],
                g.percentages[&grade]
            );
        }
        let _ = writeln!(
            out,
            "| Success (A+B) | {} ({:.1}%) | {} ({:.1}%) |",
            m.success, m.success_pct, g.success, g.success_pct
        );
        match &self.cochran_q {
            Some(q) => {
                let _ = writeln!(
                    out,
                    "\nCochran Q = {:.4}, df = {}, p = {:.4} over {} paired subjects{}",
                    q.q_statistic,
                    q.df,
                    q.p_value,
                    self.n_subjects,
                    if q.degenerate {
                        " (no discordant pairs)"
                    } else {
                        ""
                    }
                );
            }
            None => out.push_str("\nCochran Q: no paired subjects\n"),
        }
        let _ = writeln!(
            out,
            "Ratings received: {}/{} ({:.1}%)",
            self.received_ratings,
            self.expected_ratings,
            self.completeness * 100.0
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::study::log::Rating;
    use crate::study::session::tests::{fixed_time, raters, study_corpus};
    use crate::study::{create_session, SessionConfig};
    use approx::assert_abs_diff_eq;

    fn session() -> StudySession {
        create_session(
            &study_corpus(30, 30),
            &SessionConfig::new(raters(3), 3, fixed_time()),
        )
        .unwrap()
    }

    /// Item indices for (record, condition) in a fixed record order.
    fn index_by_record(s: &StudySession) -> Vec<(usize, usize)> {
        let mut records: Vec<&str> = s.items.iter().map(|i| i.record_id.as_str()).collect();
        records.sort_unstable();
        records.dedup();
        records
            .iter()
            .map(|r| {
                let find = |c| {
                    s.items
                        .iter()
                        .position(|i| i.record_id == *r && i.condition == c)
                        .unwrap()
                };
                (find(Condition::Model), find(Condition::GroundTruth))
            })
            .collect()
    }

    fn entries_from(s: &StudySession, model: &[Grade], gt: &[Grade]) -> Vec<LogEntry> {
        let idx = index_by_record(s);
        let mut out = Vec::new();
        let mut seq = 0;
        for (k, (m, g)) in model.iter().zip(gt).enumerate() {
            let rater = &s.raters[k / idx.len()];
            let (mi, gi) = idx[k % idx.len()];
            for (item, grade) in [(mi, *m), (gi, *g)] {
                seq += 1;
                out.push(LogEntry {
                    seq,
                    rating: Rating {
                        rater_id: rater.clone(),
                        item_index: item,
                        grade,
                        submitted_at: fixed_time(),
                    },
                });
            }
        }
        out
    }

    fn grades(spec: &[(Grade, usize)]) -> Vec<Grade> {
        spec.iter()
            .flat_map(|(g, n)| std::iter::repeat_n(*g, *n))
            .collect()
    }

    #[test]
    fn reader_study_table() {
        let s = session();
        let model = grades(&[
            (Grade::A, 77),
            (Grade::B, 32),
            (Grade::C, 8),
            (Grade::D, 33),
        ]);
        let gt = grades(&[
            (Grade::A, 81),
            (Grade::B, 45),
            (Grade::C, 6),
            (Grade::D, 18),
        ]);
        let summary = analyze_session(&s, &entries_from(&s, &model, &gt)).unwrap();
        let m = &summary.per_condition[&Condition::Model];
        let g = &summary.per_condition[&Condition::GroundTruth];
        let one = |x: f64| format!("{x:.1}");
        assert_eq!(
            Grade::ALL.map(|k| one(m.percentages[&k])),
            ["51.3", "21.3", "5.3", "22.0"].map(String::from)
        );
        assert_eq!(
            Grade::ALL.map(|k| one(g.percentages[&k])),
            ["54.0", "30.0", "4.0", "12.0"].map(String::from)
        );
        assert_eq!((m.success, one(m.success_pct)), (109, "72.7".to_string()));
        assert_eq!((g.success, one(g.success_pct)), (126, "84.0".to_string()));
        assert_eq!((m.n_ratings, g.n_ratings), (150, 150));
        assert_eq!(summary.received_ratings, 300);
        assert_abs_diff_eq!(summary.completeness, 1.0);
        assert_eq!(summary.n_subjects, 150);
        let md = summary.to_markdown();
        assert!(
            md.contains("| Success (A+B) | 109 (72.7%) | 126 (84.0%) |"),
            "{md}"
        );
    }

    #[test]
    fn all_a_is_degenerate() {
        let s = session();
        let all = vec![Grade::A; 150];
        let summary = analyze_session(&s, &entries_from(&s, &all, &all)).unwrap();
        let q = summary.cochran_q.unwrap();
        assert!(q.degenerate);
        assert_eq!(q.p_value, 1.0);
        for c in summary.per_condition.values() {
            assert_eq!(c.success_pct, 100.0);
        }
    }

    #[test]
    fn known_discordance() {
        let s = session();
        // 20 subjects model-only success, 3 gt-only success, rest concordant
        let mut model = vec![Grade::A; 20];
        let mut gt = vec![Grade::D; 20];
        model.extend([Grade::C; 3]);
        gt.extend([Grade::B; 3]);
        model.extend(vec![Grade::B; 127]);
        gt.extend(vec![Grade::A; 127]);
        let q = analyze_session(&s, &entries_from(&s, &model, &gt))
            .unwrap()
            .cochran_q
            .unwrap();
        assert_abs_diff_eq!(q.q_statistic, 289.0 / 23.0, epsilon = 1e-12);
        assert!(q.p_value < 0.001);
        assert_abs_diff_eq!(q.p_value, 0.000393, epsilon = 1e-5);
    }

    #[test]
    fn partial_ratings_and_conservation() {
        let s = session();
        let model = vec![Grade::B; 10];
        let gt = vec![Grade::C; 10];
        let mut entries = entries_from(&s, &model, &gt);
        entries.pop();
        let summary = analyze_session(&s, &entries).unwrap();
        assert_eq!(summary.received_ratings, 19);
        assert_eq!(summary.n_subjects, 9);
        for c in summary.per_condition.values() {
            assert_eq!(c.counts.values().sum::<usize>(), c.n_ratings);
        }
        assert_abs_diff_eq!(summary.completeness, 19.0 / 300.0);
    }

    #[test]
    fn reordering_keeps_summary() {
        let s = session();
        let model: Vec<Grade> = (0..60).map(|i| Grade::ALL[i % 4]).collect();
        let gt: Vec<Grade> = (0..60).map(|i| Grade::ALL[(i / 2) % 4]).collect();
        let mut entries = entries_from(&s, &model, &gt);
        // overwrite a few ratings later in the log
        for k in 0..5 {
            let mut e = entries[k].clone();
            e.seq = 1000 + k as u64;
            e.rating.grade = Grade::D;
            entries.push(e);
        }
        let base = analyze_session(&s, &entries).unwrap();
        entries.reverse();
        assert_eq!(analyze_session(&s, &entries).unwrap(), base);
    }

    #[test]
    fn empty() {
        assert!(matches!(
            analyze_session(&session(), &[]),
            Err(StudyError::EmptyRatings)
        ));
    }
}
