use serde::{Deserialize, Serialize};

use super::{chi_square_sf, MetricsError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CochranQResult {
    pub q_statistic: f64,
    pub df: u32,
    pub p_value: f64,
    /// Subjects whose row is not constant (the only ones that carry information).
    pub n_subjects_used: usize,
    /// Every row was constant; Q is reported as 0 and p as 1.
    pub degenerate: bool,
}

/// Cochran's Q for `n` subjects (rows) by `k` binary treatments (columns).
///
/// `Q = (k-1) * (k * sum(G_j^2) - (sum G_j)^2) / (k * sum(L_i) - sum(L_i^2))`
/// with column totals `G_j` and row totals `L_i`; rows that are all 0 or
/// all 1 add nothing to the denominator.
pub fn cochran_q(rows: &[Vec<bool>]) -> Result<CochranQResult, MetricsError> {
    let n = rows.len();
    if n == 0 {
        return Err(MetricsError::BadMatrix("need at least one subject".into()));
    }
    let k = rows[0].len();
    if k < 2 {
        return Err(MetricsError::BadMatrix(
            "need at least two treatments".into(),
        ));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != k) {
        return Err(MetricsError::BadMatrix(format!(
            "row {i} has {} columns, expected {k}",
            rows[i].len()
        )));
    }

    let mut col = vec![0i128; k];
    let mut sum_l = 0i128;
    let mut sum_l2 = 0i128;
    let mut used = 0usize;
    for r in rows {
        let l = r.iter().filter(|b| **b).count() as i128;
        for (j, &b) in r.iter().enumerate() {
            col[j] += b as i128;
        }
        sum_l += l;
        sum_l2 += l * l;
        if l != 0 && l != k as i128 {
            used += 1;
        }
    }
    let k_i = k as i128;
    let sum_g: i128 = col.iter().sum();
    let sum_g2: i128 = col.iter().map(|g| g * g).sum();
    let numerator = (k_i - 1) * (k_i * sum_g2 - sum_g * sum_g);
    let denominator = k_i * sum_l - sum_l2;
    let df = (k - 1) as u32;

    if denominator == 0 {
        return Ok(CochranQResult {
            q_statistic: 0.0,
            df,
            p_value: 1.0,
            n_subjects_used: 0,
            degenerate: true,
        });
    }
    let q = numerator as f64 / denominator as f64;
    Ok(CochranQResult {
        q_statistic: q,
        df,
        p_value: chi_square_sf(q, df)?,
        n_subjects_used: used,
        degenerate: false,
    })
}
