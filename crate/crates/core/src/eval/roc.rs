use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocResult {
    pub auc: f64,
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`, one point per distinct score.
    pub curve: Vec<(f64, f64)>,
    pub positives: usize,
    pub negatives: usize,
}

impl RocResult {
    /// Trapezoidal area under `curve`.
    pub fn trapezoid_area(&self) -> f64 {
        self.curve
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
            .sum()
    }
}

/// Area under the ROC curve with half credit for tied scores, i.e. the
/// probability that a random positive outranks a random negative.
///
/// The pair count is accumulated in integers so the result is the exact
/// rational `(2 * concordant + ties) / (2 * P * N)` rounded once.
pub fn auc_roc(scores: &[f64], labels: &[bool]) -> Result<RocResult> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension {
            expected: scores.len(),
            got: labels.len(),
        });
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::invalid("scores", format!("{s}")));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Insufficient(
            "AUC-ROC needs at least one positive and one negative".into(),
        ));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    // Sweep thresholds from high to low, one group of equal scores at a time.
    let (p, n) = (positives as f64, negatives as f64);
    let mut curve = vec![(0.0, 0.0)];
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut twice_area = 0u128;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (mut gp, mut gn) = (0u64, 0u64);
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                gp += 1;
            } else {
                gn += 1;
            }
            i += 1;
        }
        // Negatives in this group are beaten by the positives ranked above
        // and tie with the positives inside the group.
        twice_area += gn as u128 * (2 * tp as u128 + gp as u128);
        tp += gp;
        fp += gn;
        curve.push((fp as f64 / n, tp as f64 / p));
    }
    let auc = twice_area as f64 / (2 * positives as u128 * negatives as u128) as f64;
    Ok(RocResult {
        auc,
        curve,
        positives,
        negatives,
    })
}
