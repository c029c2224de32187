//! Ranking and classification metrics, plus attention-heatmap data export.
//!
//! The primary metric is hits@k: how many truly vulnerable functions land
//! in the top k of the probability ranking, i.e. how much an auditor gains
//! by reviewing the model's shortlist. Threshold metrics (recall, precision,
//! F1) complement it for fixed-budget classification.

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};

/// Default review-budget sizes reported by [`report`].
pub const DEFAULT_HITS_KS: [usize; 4] = [50, 100, 200, 500];

/// Default probability threshold for recall/precision/F1.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Predictions sorted by descending probability (ties broken by ascending
/// sample id), each carrying its ground-truth label.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedPredictions {
    entries: Vec<(String, f64, bool)>,
}

impl RankedPredictions {
    /// Sorts the entries into ranking order. Duplicate ids and non-finite
    /// probabilities are rejected — both would make the ranking ambiguous.
    pub fn new(mut entries: Vec<(String, f64, bool)>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (id, prob, _) in &entries {
            if !seen.insert(id.as_str()) {
                return Err(Error::invalid_input(format!("duplicate sample id {id}")));
            }
            if !prob.is_finite() {
                return Err(Error::invalid_input(format!(
                    "non-finite probability for sample {id}"
                )));
            }
        }
        entries.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .expect("finite probabilities compare")
                .then_with(|| a.0.cmp(&b.0))
        });
        Ok(RankedPredictions { entries })
    }

    /// `(id, probability, label)` in ranking order.
    pub fn entries(&self) -> &[(String, f64, bool)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.entries.iter().filter(|(_, _, label)| *label).count()
    }
}

/// True positives among the top `min(k, N)` ranked entries.
pub fn hits_at_k(ranked: &RankedPredictions, k: usize) -> Result<usize> {
    if k == 0 {
        return Err(Error::invalid_input("hits@k requires k ≥ 1"));
    }
    Ok(ranked
        .entries
        .iter()
        .take(k)
        .filter(|(_, _, label)| *label)
        .count())
}

/// Confusion-matrix summary at one decision threshold
/// (predicted positive ⇔ probability ≥ threshold).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdMetrics {
    pub threshold: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

/// Recall, precision, and F1 over probability/label pairs. Empty-denominator
/// conventions: recall and precision fall back to 0, as does F1 when
/// precision + recall = 0.
pub fn confusion_at_threshold(probs: &[f64], labels: &[bool], threshold: f64) -> ThresholdMetrics {
    debug_assert_eq!(probs.len(), labels.len());
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_ = 0;
    let mut tn = 0;
    for (&p, &y) in probs.iter().zip(labels) {
        match (p >= threshold, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let recall = ratio(tp, tp + fn_);
    let precision = ratio(tp, tp + fp);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    ThresholdMetrics {
        threshold,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        true_negatives: tn,
        recall,
        precision,
        f1,
    }
}

/// (recall, precision, F1) of a ranking at a threshold in `[0, 1]`.
pub fn recall_f1(ranked: &RankedPredictions, threshold: f64) -> Result<(f64, f64, f64)> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::invalid_input(format!(
            "threshold must lie in [0, 1], got {threshold}"
        )));
    }
    let probs: Vec<f64> = ranked.entries.iter().map(|e| e.1).collect();
    let labels: Vec<bool> = ranked.entries.iter().map(|e| e.2).collect();
    let m = confusion_at_threshold(&probs, &labels, threshold);
    Ok((m.recall, m.precision, m.f1))
}

/// Everything the evaluation table reports for one model run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    /// `(k, hits@k)` for each configured review budget.
    pub hits: Vec<(usize, usize)>,
    pub positives: usize,
    pub negatives: usize,
    #[serde(flatten)]
    pub threshold_metrics: ThresholdMetrics,
}

/// Aggregates hits@k over `ks` plus threshold metrics into one report.
pub fn report(
    ranked: &RankedPredictions,
    ks: &[usize],
    threshold: f64,
) -> Result<MetricsReport> {
    if ranked.is_empty() {
        return Err(Error::invalid_input("cannot evaluate zero predictions"));
    }
    let hits = ks
        .iter()
        .map(|&k| Ok((k, hits_at_k(ranked, k)?)))
        .collect::<Result<Vec<_>>>()?;
    let probs: Vec<f64> = ranked.entries.iter().map(|e| e.1).collect();
    let labels: Vec<bool> = ranked.entries.iter().map(|e| e.2).collect();
    let positives = ranked.positives();
    Ok(MetricsReport {
        hits,
        positives,
        negatives: ranked.len() - positives,
        threshold_metrics: confusion_at_threshold(&probs, &labels, threshold),
    })
}

impl fmt::Display for MetricsReport {
    /// Aligned two-row table: hits at each budget, then recall and F1 at the
    /// reported threshold.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut headers: Vec<String> =
            self.hits.iter().map(|(k, _)| format!("hits@{k}")).collect();
        headers.push("recall".to_string());
        headers.push("f1".to_string());
        let mut values: Vec<String> =
            self.hits.iter().map(|(_, h)| h.to_string()).collect();
        values.push(format!("{:.4}", self.threshold_metrics.recall));
        values.push(format!("{:.4}", self.threshold_metrics.f1));
        let widths: Vec<usize> = headers
            .iter()
            .zip(&values)
            .map(|(h, v)| h.len().max(v.len()))
            .collect();
        for (h, w) in headers.iter().zip(&widths) {
            write!(f, "{h:>w$}  ")?;
        }
        writeln!(f)?;
        for (v, w) in values.iter().zip(&widths) {
            write!(f, "{v:>w$}  ")?;
        }
        writeln!(f)?;
        write!(
            f,
            "({} positives / {} negatives, threshold {})",
            self.positives, self.negatives, self.threshold_metrics.threshold
        )
    }
}

/// Renders attention triples from one layer/head as tab-separated
/// `(index, token, weight)` rows, where each token's weight is its received
/// (column-summed) attention normalized to `[0, 1]` by the maximum.
pub fn export_heatmap(
    triples: &[(usize, usize, f64)],
    tokens: &[String],
) -> Result<String> {
    let mut sums = vec![0.0f64; tokens.len()];
    for &(_, j, w) in triples {
        let slot = sums.get_mut(j).ok_or_else(|| {
            Error::invalid_input(format!(
                "attention column {j} outside the {}-token sequence",
                tokens.len()
            ))
        })?;
        *slot += w;
    }
    let max = sums.iter().cloned().fold(0.0f64, f64::max);
    let mut out = String::from("index\ttoken\tweight\n");
    for (i, (token, &sum)) in tokens.iter().zip(&sums).enumerate() {
        let weight = if max > 0.0 { sum / max } else { 0.0 };
        // Keep the file line-oriented even for tokens with exotic bytes.
        let printable = token.replace(['\t', '\n', '\r'], " ");
        out.push_str(&format!("{i}\t{printable}\t{weight:.6}\n"));
    }
    Ok(out)
}
