//! Instance-level classification metrics and distribution-level divergences
//! between observed and predicted mode shares.
//!
//! Logarithms are natural; divergences are in nats.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::DecisionRecord;

pub const DEFAULT_EPSILON: f64 = 1e-9;
const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("records and ground truth are not aligned: {0}")]
    Alignment(String),
    #[error("label `{0}` is not in the class order")]
    UnknownLabel(String),
    #[error("metrics are undefined for an empty cell")]
    Empty,
    #[error("distributions have different lengths ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("invalid share distribution: {0}")]
    InvalidDistribution(String),
}

/// Counts per (true, predicted) class plus, per true class, the number of
/// `INVALID` predictions. Invalid answers are wrong for their true class and
/// are never attributed to a predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    labels: Vec<String>,
    counts: Vec<Vec<u64>>,
    invalid: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(labels: &[String]) -> Self {
        let c = labels.len();
        Self { labels: labels.to_vec(), counts: vec![vec![0; c]; c], invalid: vec![0; c] }
    }

    fn index(&self, label: &str) -> Result<usize, MetricsError> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| MetricsError::UnknownLabel(label.to_string()))
    }

    /// `predicted = None` records an invalid answer.
    pub fn add(&mut self, truth: &str, predicted: Option<&str>) -> Result<(), MetricsError> {
        let t = self.index(truth)?;
        match predicted {
            Some(p) => {
                let p = self.index(p)?;
                self.counts[t][p] += 1;
            }
            None => self.invalid[t] += 1,
        }
        Ok(())
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn count(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn invalid(&self, truth: usize) -> u64 {
        self.invalid[truth]
    }

    pub fn invalid_total(&self) -> u64 {
        self.invalid.iter().sum()
    }

    /// Ground-truth support, invalid answers included.
    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum::<u64>() + self.invalid[class]
    }

    /// Valid predictions of `class`.
    pub fn predicted(&self, class: usize) -> u64 {
        self.counts.iter().map(|row| row[class]).sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.n_classes()).map(|c| self.counts[c][c]).sum()
    }

    pub fn total(&self) -> u64 {
        (0..self.n_classes()).map(|c| self.support(c)).sum()
    }
}

/// Tabulates records against ground truth keyed by agent id. Every record
/// must have exactly one truth and vice versa.
pub fn confusion(
    records: &[DecisionRecord],
    truths: &BTreeMap<String, String>,
    labels: &[String],
) -> Result<ConfusionMatrix, MetricsError> {
    let mut cm = ConfusionMatrix::new(labels);
    let mut seen = HashSet::new();
    for r in records {
        if !seen.insert(r.agent_id.as_str()) {
            return Err(MetricsError::Alignment(format!("agent `{}` appears twice", r.agent_id)));
        }
        let truth = truths
            .get(&r.agent_id)
            .ok_or_else(|| MetricsError::Alignment(format!("agent `{}` has no ground truth", r.agent_id)))?;
        cm.add(truth, r.predicted_mode.mode())?;
    }
    if seen.len() != truths.len() {
        let missing = truths.keys().find(|k| !seen.contains(k.as_str())).expect("count mismatch");
        return Err(MetricsError::Alignment(format!("agent `{missing}` has no record")));
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceMetrics {
    pub accuracy: f64,
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub f1_macro: f64,
    pub f1_weighted: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class precision, recall and F1. Zero denominators give 0.
pub fn class_scores(cm: &ConfusionMatrix) -> Vec<ClassScores> {
    (0..cm.n_classes())
        .map(|c| {
            let tp = cm.count(c, c);
            let precision = ratio(tp, cm.predicted(c));
            let recall = ratio(tp, cm.support(c));
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassScores { precision, recall, f1, support: cm.support(c) }
        })
        .collect()
}

/// Macro averages run over classes that occur in the truth or in the
/// predictions; a class that is never predicted contributes precision 0.
pub fn instance_metrics(cm: &ConfusionMatrix) -> Result<InstanceMetrics, MetricsError> {
    let n = cm.total();
    if n == 0 {
        return Err(MetricsError::Empty);
    }
    let scores = class_scores(cm);
    let active: Vec<&ClassScores> = scores
        .iter()
        .enumerate()
        .filter(|(c, s)| s.support > 0 || cm.predicted(*c) > 0)
        .map(|(_, s)| s)
        .collect();
    let macro_mean = |f: fn(&ClassScores) -> f64| active.iter().map(|s| f(s)).sum::<f64>() / active.len() as f64;
    let f1_weighted = scores.iter().map(|s| s.support as f64 * s.f1).sum::<f64>() / n as f64;
    Ok(InstanceMetrics {
        accuracy: cm.correct() as f64 / n as f64,
        precision_macro: macro_mean(|s| s.precision),
        recall_macro: macro_mean(|s| s.recall),
        f1_macro: macro_mean(|s| s.f1),
        f1_weighted,
    })
}

/// Class shares in a fixed class order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareDistribution {
    probs: Vec<f64>,
    smoothed: bool,
    epsilon: f64,
}

impl ShareDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self, MetricsError> {
        if probs.is_empty() {
            return Err(MetricsError::InvalidDistribution("no classes".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(MetricsError::InvalidDistribution(format!("negative or non-finite share in {probs:?}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(MetricsError::InvalidDistribution(format!("shares sum to {sum}")));
        }
        Ok(Self { probs, smoothed: false, epsilon: 0.0 })
    }

    pub fn from_counts(counts: &[u64]) -> Result<Self, MetricsError> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(MetricsError::Empty);
        }
        Self::new(counts.iter().map(|&c| c as f64 / total as f64).collect())
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn is_smoothed(&self) -> bool {
        self.smoothed
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// `p' = (p + ε) / (1 + Cε)`.
pub fn smooth_distribution(shares: &ShareDistribution, epsilon: f64) -> ShareDistribution {
    let denom = 1.0 + shares.len() as f64 * epsilon;
    ShareDistribution {
        probs: shares.probs.iter().map(|p| (p + epsilon) / denom).collect(),
        smoothed: true,
        epsilon,
    }
}

fn same_length(p: &ShareDistribution, q: &ShareDistribution) -> Result<(), MetricsError> {
    if p.len() != q.len() {
        return Err(MetricsError::LengthMismatch { left: p.len(), right: q.len() });
    }
    Ok(())
}

/// Mean absolute share difference on unsmoothed shares.
pub fn dist_mae(p: &ShareDistribution, q: &ShareDistribution) -> Result<f64, MetricsError> {
    same_length(p, q)?;
    let total: f64 = p.probs.iter().zip(&q.probs).map(|(a, b)| (a - b).abs()).sum();
    Ok(total / p.len() as f64)
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| a * (a / b).ln()).sum()
}

/// Jensen-Shannon divergence of the smoothed shares, in `[0, ln 2]`.
pub fn jsd(p: &ShareDistribution, q: &ShareDistribution, epsilon: f64) -> Result<f64, MetricsError> {
    same_length(p, q)?;
    let ps = smooth_distribution(p, epsilon);
    let qs = smooth_distribution(q, epsilon);
    let m: Vec<f64> = ps.probs.iter().zip(&qs.probs).map(|(a, b)| (a + b) / 2.0).collect();
    let value = 0.5 * (kl(&ps.probs, &m) + kl(&qs.probs, &m));
    Ok(value.clamp(0.0, std::f64::consts::LN_2))
}

/// `-Σ p' ln q'` over smoothed shares; always finite for `ε > 0`.
pub fn cross_entropy(p: &ShareDistribution, q: &ShareDistribution, epsilon: f64) -> Result<f64, MetricsError> {
    same_length(p, q)?;
    let ps = smooth_distribution(p, epsilon);
    let qs = smooth_distribution(q, epsilon);
    Ok(-ps.probs.iter().zip(&qs.probs).map(|(a, b)| a * b.ln()).sum::<f64>())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub labels: Vec<String>,
    pub n: u64,
    pub accuracy: f64,
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub f1_macro: f64,
    pub f1_weighted: f64,
    /// Distribution metrics are absent when no record holds a valid mode.
    pub dist_mae: Option<f64>,
    pub jsd: Option<f64>,
    pub cross_entropy: Option<f64>,
    pub invalid_count: u64,
    pub true_shares: Vec<f64>,
    /// Shares over valid predictions only.
    pub predicted_shares: Option<Vec<f64>>,
    pub epsilon: f64,
}

pub fn evaluate_run(
    records: &[DecisionRecord],
    truths: &BTreeMap<String, String>,
    labels: &[String],
) -> Result<MetricsReport, MetricsError> {
    evaluate_run_with(records, truths, labels, DEFAULT_EPSILON)
}

pub fn evaluate_run_with(
    records: &[DecisionRecord],
    truths: &BTreeMap<String, String>,
    labels: &[String],
    epsilon: f64,
) -> Result<MetricsReport, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let cm = confusion(records, truths, labels)?;
    let inst = instance_metrics(&cm)?;
    let c = cm.n_classes();
    let truth_counts: Vec<u64> = (0..c).map(|i| cm.support(i)).collect();
    let pred_counts: Vec<u64> = (0..c).map(|i| cm.predicted(i)).collect();
    let truth = ShareDistribution::from_counts(&truth_counts)?;
    let predicted = match ShareDistribution::from_counts(&pred_counts) {
        Ok(d) => Some(d),
        Err(MetricsError::Empty) => None,
        Err(e) => return Err(e),
    };
    let (dist_mae, jsd, cross_entropy) = match &predicted {
        Some(q) => (
            Some(dist_mae(&truth, q)?),
            Some(jsd(&truth, q, epsilon)?),
            Some(cross_entropy(&truth, q, epsilon)?),
        ),
        None => (None, None, None),
    };
    Ok(MetricsReport {
        labels: labels.to_vec(),
        n: cm.total(),
        accuracy: inst.accuracy,
        precision_macro: inst.precision_macro,
        recall_macro: inst.recall_macro,
        f1_macro: inst.f1_macro,
        f1_weighted: inst.f1_weighted,
        dist_mae,
        jsd,
        cross_entropy,
        invalid_count: cm.invalid_total(),
        true_shares: truth.probs,
        predicted_shares: predicted.map(|d| d.probs),
        epsilon,
    })
}
