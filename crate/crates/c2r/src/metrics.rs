//! Evaluation metrics: accuracy, rank-based binary AUC, rationale
//! Precision@k, and multi-seed aggregation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum MetricError {
    #[error("contract violation: {0}")]
    Contract(String),
}

pub type Result<T> = std::result::Result<T, MetricError>;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EvalReport {
    pub acc: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precision_at_k: Option<f64>,
    pub n_samples: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AggregateReport {
    pub n_seeds: usize,
    pub acc_mean: f64,
    pub acc_std: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc_std: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precision_at_k_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precision_at_k_std: Option<f64>,
}

pub fn accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    if preds.is_empty() || preds.len() != labels.len() {
        return Err(MetricError::Contract(format!(
            "accuracy over {} predictions and {} labels",
            preds.len(),
            labels.len()
        )));
    }
    let hits = preds.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Rank-based (Mann-Whitney) AUC with midrank tie handling.
pub fn binary_auc(scores: &[f64], labels: &[usize]) -> Result<f64> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(MetricError::Contract("scores/labels length mismatch".into()));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::Contract("AUC undefined with a single class".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = midrank;
        }
        i = j + 1;
    }
    let rank_sum: f64 = labels
        .iter()
        .zip(&ranks)
        .filter(|(&y, _)| y == 1)
        .map(|(_, &r)| r)
        .sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

/// Fraction of the k highest-scoring nodes (ties broken by lower index)
/// that are ground-truth rationale nodes. None when the graph has fewer
/// than k nodes.
pub fn precision_at_k(node_scores: &[f64], rationale_mask: &[bool], k: usize) -> Option<f64> {
    if node_scores.len() < k || node_scores.len() != rationale_mask.len() {
        return None;
    }
    let mut order: Vec<usize> = (0..node_scores.len()).collect();
    order.sort_by(|&a, &b| {
        node_scores[b]
            .partial_cmp(&node_scores[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let hits = order[..k].iter().filter(|&&i| rationale_mask[i]).count();
    Some(hits as f64 / k as f64)
}

/// Per-metric mean and population standard deviation across seeds.
/// Reports must expose the same optional metrics.
pub fn aggregate(reports: &[EvalReport]) -> Result<AggregateReport> {
    if reports.is_empty() {
        return Err(MetricError::Contract("aggregate over zero reports".into()));
    }
    let mixed = |get: fn(&EvalReport) -> bool| {
        let first = get(&reports[0]);
        reports.iter().any(|r| get(r) != first)
    };
    if mixed(|r| r.auc.is_some()) || mixed(|r| r.precision_at_k.is_some()) {
        return Err(MetricError::Contract("heterogeneous metric sets".into()));
    }
    let mean_std = |xs: Vec<f64>| {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    };
    let (acc_mean, acc_std) = mean_std(reports.iter().map(|r| r.acc).collect());
    let (auc_mean, auc_std) = if reports[0].auc.is_some() {
        let (m, s) = mean_std(reports.iter().map(|r| r.auc.unwrap()).collect());
        (Some(m), Some(s))
    } else {
        (None, None)
    };
    let (p_mean, p_std) = if reports[0].precision_at_k.is_some() {
        let (m, s) = mean_std(reports.iter().map(|r| r.precision_at_k.unwrap()).collect());
        (Some(m), Some(s))
    } else {
        (None, None)
    };
    Ok(AggregateReport {
        n_seeds: reports.len(),
        acc_mean,
        acc_std,
        auc_mean,
        auc_std,
        precision_at_k_mean: p_mean,
        precision_at_k_std: p_std,
    })
}

/// Brute-force pairwise AUC: P(score_pos > score_neg) + P(tie)/2.
/// Oracle counterpart of [`binary_auc`] for testing.
pub fn pairwise_auc(scores: &[f64], labels: &[usize]) -> Result<f64> {
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &y)| y == 1).map(|(&s, _)| s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &y)| y == 0).map(|(&s, _)| s).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(MetricError::Contract("AUC undefined with a single class".into()));
    }
    let mut acc = 0.0;
    for &p in &pos {
        for &n in &neg {
            acc += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    Ok(acc / (pos.len() * neg.len()) as f64)
}
