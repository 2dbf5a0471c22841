//! Area under the ROC curve via the rank statistic.

use crate::error::{Error, Result};

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Computed by sorting once and averaging ranks within
/// tied groups, `O(k log k)`.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::contract(format!(
            "auc: {} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::NotEvaluable(format!(
            "auc needs both classes, got {positives} positives and {negatives} negatives"
        )));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // 1-based average rank of the tied group [i, j)
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if labels[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }

    let p = positives as f64;
    let n = negatives as f64;
    let u = rank_sum_pos - p * (p + 1.0) / 2.0;
    Ok(u / (p * n))
}

/// Exhaustive pairwise count over all positive-negative pairs. Quadratic;
/// kept as the independent oracle for [`auc`].
pub fn auc_pairwise(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let pos: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter_map(|(&s, &l)| l.then_some(s))
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter_map(|(&s, &l)| (!l).then_some(s))
        .collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::NotEvaluable("single-class input".to_string()));
    }
    let mut wins = 0.0;
    for &p in &pos {
        for &n in &neg {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    Ok(wins / (pos.len() * neg.len()) as f64)
}
