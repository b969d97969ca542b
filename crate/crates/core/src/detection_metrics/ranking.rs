//! Ranking metrics over detection scores.

use serde::{Deserialize, Serialize};

use super::matching::{exam_score, DetectionOutcome};
use crate::error::{Error, Result};

/// Inputs up to this size are scored by explicit pair counting.
pub const PAIR_COUNTING_LIMIT: usize = 10_000;

fn check_scores(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(pos) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::NonFinite(format!("score {pos} is NaN")));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::AucUndefined {
            positives,
            negatives,
        });
    }
    Ok((positives, negatives))
}

/// Area under the ROC curve as the Mann-Whitney statistic
/// `P(pos > neg) + P(pos == neg) / 2`.
///
/// Both code paths produce the same exact rational `(2 wins + ties) / (2 P N)`
/// before the final division.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (p, n) = check_scores(scores, labels)?;
    let doubled = if scores.len() <= PAIR_COUNTING_LIMIT {
        doubled_wins_by_pairs(scores, labels)
    } else {
        doubled_wins_by_ranks(scores, labels, p)
    };
    Ok(doubled as f64 / (2 * p * n) as f64)
}

fn doubled_wins_by_pairs(scores: &[f64], labels: &[bool]) -> u64 {
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l).map(|(&s, _)| s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| !l).map(|(&s, _)| s).collect();
    let mut total = 0u64;
    for &a in &pos {
        for &b in &neg {
            total += match a.partial_cmp(&b) {
                Some(std::cmp::Ordering::Greater) => 2,
                Some(std::cmp::Ordering::Equal) => 1,
                _ => 0,
            };
        }
    }
    total
}

/// `2 U` from midranks: twice the positive rank sum minus `P (P + 1)`.
fn doubled_wins_by_ranks(scores: &[f64], labels: &[bool], positives: usize) -> u64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut doubled_rank_sum = 0u64;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && scores[order[end + 1]] == scores[order[start]] {
            end += 1;
        }
        // ranks start..=end (1-based: start+1..=end+1), doubled midrank
        let doubled_mid = (start + 1 + end + 1) as u64;
        let tied_pos = order[start..=end].iter().filter(|&&i| labels[i]).count() as u64;
        doubled_rank_sum += doubled_mid * tied_pos;
        start = end + 1;
    }
    let p = positives as u64;
    doubled_rank_sum - p * (p + 1)
}

/// Exam-level AUC from `(score, has reference lesion)` pairs.
pub fn exam_auc(exams: &[(f64, bool)]) -> Result<f64> {
    let (scores, labels): (Vec<f64>, Vec<bool>) = exams.iter().copied().unzip();
    roc_auc(&scores, &labels)
}

/// Exam-level AUC directly from per-exam outcomes: each exam is scored by
/// its best candidate and labeled by whether it has any reference lesion.
pub fn exam_auc_from_outcomes(outcomes: &[DetectionOutcome]) -> Result<f64> {
    let exams: Vec<(f64, bool)> = outcomes
        .iter()
        .map(|o| (exam_score(o), o.reference_count() > 0))
        .collect();
    exam_auc(&exams)
}

/// Pooled `(score, is_lesion)` items: TPs as positives, FPs as negatives and
/// missed lesions as positives with score 0.
pub fn pooled_lesion_items(outcomes: &[DetectionOutcome]) -> Vec<(f64, bool)> {
    let mut items = Vec::new();
    for o in outcomes {
        items.extend(o.true_positives.iter().map(|t| (t.probability, true)));
        items.extend(o.false_positives.iter().map(|f| (f.probability, false)));
        items.extend(o.false_negatives.iter().map(|_| (0.0, true)));
    }
    items
}

pub fn lesion_auc(outcomes: &[DetectionOutcome]) -> Result<f64> {
    let (scores, labels): (Vec<f64>, Vec<bool>) = pooled_lesion_items(outcomes).into_iter().unzip();
    roc_auc(&scores, &labels)
}

/// Dataset-pooled average precision with step interpolation.
///
/// Candidates are ranked by descending probability; tied candidates enter
/// the curve together at one operating point. Recall is measured against
/// every reference lesion, so missed lesions cap the attainable recall.
pub fn average_precision(outcomes: &[DetectionOutcome]) -> Result<f64> {
    let total_refs: usize = outcomes.iter().map(|o| o.reference_count()).sum();
    if total_refs == 0 {
        return Err(Error::NoReferenceLesions);
    }
    let mut detections: Vec<(f64, bool)> = outcomes
        .iter()
        .flat_map(|o| {
            o.true_positives
                .iter()
                .map(|t| (t.probability, true))
                .chain(o.false_positives.iter().map(|f| (f.probability, false)))
        })
        .collect();
    detections.sort_by(|a, b| b.0.total_cmp(&a.0));

    let (mut tp, mut seen) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut k = 0;
    while k < detections.len() {
        let score = detections[k].0;
        while k < detections.len() && detections[k].0 == score {
            tp += usize::from(detections[k].1);
            seen += 1;
            k += 1;
        }
        let recall = tp as f64 / total_refs as f64;
        let precision = tp as f64 / seen as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: String,
    /// `None` when the metric is undefined on this data (e.g. single-class AUC).
    pub value: Option<f64>,
    pub n: usize,
}

/// Detection metrics for a set of exams, plus the conventions used to compute them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metrics: Vec<MetricRow>,
    pub overlap: String,
    pub overlap_threshold: f64,
    pub ap_pooling: String,
    pub missed_lesions_in_lesion_auc: String,
    pub notes: Vec<String>,
}

impl MetricReport {
    pub fn from_outcomes(outcomes: &[DetectionOutcome], overlap_threshold: f64) -> Self {
        let mut notes = Vec::new();
        let mut row = |metric: &str, n: usize, value: Result<f64>| {
            let value = match value {
                Ok(v) => Some(v),
                Err(e) => {
                    notes.push(format!("{metric}: {e}"));
                    None
                }
            };
            MetricRow {
                metric: metric.to_string(),
                value,
                n,
            }
        };
        let lesion_items = pooled_lesion_items(outcomes).len();
        let detections: usize = outcomes.iter().map(|o| o.candidate_count()).sum();
        let metrics = vec![
            row("exam_auc", outcomes.len(), exam_auc_from_outcomes(outcomes)),
            row("lesion_auc", lesion_items, lesion_auc(outcomes)),
            row("average_precision", detections, average_precision(outcomes)),
        ];
        Self {
            metrics,
            overlap: "iou".into(),
            overlap_threshold,
            ap_pooling: "dataset".into(),
            missed_lesions_in_lesion_auc: "positive_with_score_0".into(),
            notes,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value,n\n");
        for r in &self.metrics {
            let value = r.value.map(crate::format_f64).unwrap_or_default();
            out.push_str(&format!("{},{},{}\n", r.metric, value, r.n));
        }
        out
    }
}
