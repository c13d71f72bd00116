//! Evaluation metrics for a binary probe: log loss, accuracy, balanced
//! accuracy, and rank-based ROC AUC.

use crate::dataset::{MetricKind, MetricValue};

const PROB_FLOOR: f64 = 1e-15;

/// Mean binary cross-entropy with probabilities clamped away from 0 and 1.
pub fn log_loss(probs: &[f64], labels: &[u8]) -> f64 {
    let n = probs.len().max(1) as f64;
    probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum::<f64>()
        / n
}

pub fn accuracy(probs: &[f64], labels: &[u8]) -> f64 {
    let hits = probs
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| u8::from(p >= 0.5) == y)
        .count();
    hits as f64 / probs.len().max(1) as f64
}

/// `(TPR + TNR) / 2`; when only one class is present, the recall of that
/// class.
pub fn balanced_accuracy(probs: &[f64], labels: &[u8]) -> f64 {
    let mut hit = [0usize; 2];
    let mut total = [0usize; 2];
    for (&p, &y) in probs.iter().zip(labels) {
        let c = usize::from(y);
        total[c] += 1;
        if u8::from(p >= 0.5) == y {
            hit[c] += 1;
        }
    }
    let recalls: Vec<f64> = (0..2)
        .filter(|&c| total[c] > 0)
        .map(|c| hit[c] as f64 / total[c] as f64)
        .collect();
    if recalls.is_empty() {
        return 0.0;
    }
    recalls.iter().sum::<f64>() / recalls.len() as f64
}

/// Mann–Whitney estimate of `P(score⁺ > score⁻)` with ties counted as ½
/// (average ranks). `None` unless both classes are present.
pub fn auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their average
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] == 1 {
                rank_sum_pos += avg;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some((u / (n_pos as f64 * n_neg as f64)).clamp(0.0, 1.0))
}

/// All four metrics; AUC is omitted when a class is missing.
pub fn evaluate(probs: &[f64], labels: &[u8]) -> Vec<MetricValue> {
    let n = probs.len();
    if n == 0 {
        return Vec::new();
    }
    let mut out = vec![
        MetricValue {
            kind: MetricKind::Loss,
            value: log_loss(probs, labels),
            n,
        },
        MetricValue {
            kind: MetricKind::BalancedAccuracy,
            value: balanced_accuracy(probs, labels),
            n,
        },
    ];
    if let Some(a) = auc(probs, labels) {
        out.push(MetricValue {
            kind: MetricKind::Auc,
            value: a,
            n,
        });
    }
    out.push(MetricValue {
        kind: MetricKind::Accuracy,
        value: accuracy(probs, labels),
        n,
    });
    out
}
