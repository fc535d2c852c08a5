//! Temporal event-detection precision / recall / F1.
//!
//! Matching is greedy and one-to-one within `±tolerance_s`. Scored
//! predictions are processed by descending score and each takes its nearest
//! unmatched ground-truth event. Unscored predictions are matched by
//! ascending pair distance over all (prediction, event) pairs, which makes the
//! count symmetric in its two arguments.

use serde::Serialize;

pub const DEFAULT_TOLERANCE_S: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventF1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub matches: usize,
    pub n_pred: usize,
    pub n_gt: usize,
    /// `(prediction index, ground-truth index)` pairs.
    #[serde(skip)]
    pub pairs: Vec<(usize, usize)>,
}

impl EventF1 {
    fn from_pairs(pairs: Vec<(usize, usize)>, n_pred: usize, n_gt: usize) -> Self {
        let matches = pairs.len();
        let precision = if n_pred == 0 {
            if n_gt == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            matches as f64 / n_pred as f64
        };
        let recall = if n_gt == 0 {
            if n_pred == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            matches as f64 / n_gt as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
            matches,
            n_pred,
            n_gt,
            pairs,
        }
    }
}

/// Unscored matching: greedy over candidate pairs by distance.
pub fn eval_event_f1(predicted_ts: &[f64], gt_ts: &[f64], tolerance_s: f64) -> EventF1 {
    let mut cands: Vec<(f64, f64, f64, usize, usize)> = Vec::new();
    for (i, &p) in predicted_ts.iter().enumerate() {
        for (j, &g) in gt_ts.iter().enumerate() {
            let d = (p - g).abs();
            if d <= tolerance_s {
                cands.push((d, p.min(g), p.max(g), i, j));
            }
        }
    }
    // Ordering key depends only on the two times, not on which side they
    // came from.
    cands.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.total_cmp(&b.1))
            .then(a.2.total_cmp(&b.2))
    });
    let mut pred_used = vec![false; predicted_ts.len()];
    let mut gt_used = vec![false; gt_ts.len()];
    let mut pairs = Vec::new();
    for (_, _, _, i, j) in cands {
        if !pred_used[i] && !gt_used[j] {
            pred_used[i] = true;
            gt_used[j] = true;
            pairs.push((i, j));
        }
    }
    EventF1::from_pairs(pairs, predicted_ts.len(), gt_ts.len())
}

/// Scored matching: `(timestamp, score)` predictions, highest score first.
pub fn eval_event_f1_scored(predicted: &[(f64, f64)], gt_ts: &[f64], tolerance_s: f64) -> EventF1 {
    let mut order: Vec<usize> = (0..predicted.len()).collect();
    order.sort_by(|&a, &b| predicted[b].1.total_cmp(&predicted[a].1));
    let mut gt_used = vec![false; gt_ts.len()];
    let mut pairs = Vec::new();
    for i in order {
        let t = predicted[i].0;
        let mut best: Option<(f64, usize)> = None;
        for (j, &g) in gt_ts.iter().enumerate() {
            let d = (t - g).abs();
            if gt_used[j] || d > tolerance_s {
                continue;
            }
            if best.is_none_or(|(bd, bj)| d < bd || (d == bd && g < gt_ts[bj])) {
                best = Some((d, j));
            }
        }
        if let Some((_, j)) = best {
            gt_used[j] = true;
            pairs.push((i, j));
        }
    }
    EventF1::from_pairs(pairs, predicted.len(), gt_ts.len())
}
