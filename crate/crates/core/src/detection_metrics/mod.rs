//! Lesion-detection evaluation.
//!
//! A probability volume is thresholded, split into 3D connected components
//! (lesion candidates, each scored by its peak probability) and matched
//! against the components of a reference mask by intersection-over-union.
//! Per-exam outcomes then feed exam-level AUC, lesion-level AUC and
//! dataset-pooled average precision.

mod components;
mod matching;
mod ranking;
mod volume;

pub use components::{connected_components, Connectivity, Region};
pub use matching::{
    exam_score, extract_candidates, match_lesions, reference_lesions, DetectionOutcome, FalsePositive,
    LesionCandidate, ReferenceLesion, TruePositive, DEFAULT_OVERLAP_THRESHOLD,
};
pub use ranking::{
    average_precision, exam_auc, exam_auc_from_outcomes, lesion_auc, pooled_lesion_items, roc_auc,
    MetricReport, MetricRow, PAIR_COUNTING_LIMIT,
};
pub use volume::{dynamic_threshold, threshold_volume, BinaryMask, Dims, DynamicThreshold, ProbVolume};

use crate::error::Result;

/// How a probability volume is turned into a candidate mask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Thresholding {
    Fixed(f64),
    Dynamic(DynamicThreshold),
}

/// Thresholds, extracts candidates and matches them for one exam.
pub fn evaluate_exam(
    volume: &ProbVolume,
    reference: &BinaryMask,
    thresholding: Thresholding,
    connectivity: Connectivity,
    tau: f64,
) -> Result<DetectionOutcome> {
    let mask = match thresholding {
        Thresholding::Fixed(t) => threshold_volume(volume, t),
        Thresholding::Dynamic(params) => dynamic_threshold(volume, &params)?.0,
    };
    let candidates = extract_candidates(volume, &mask, connectivity)?;
    let references = reference_lesions(reference, connectivity);
    match_lesions(&candidates, &references, tau)
}
