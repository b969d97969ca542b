use serde::{Deserialize, Serialize};

use super::components::{connected_components, Connectivity, Region};
use super::volume::{BinaryMask, ProbVolume};
use crate::error::{Error, Result};

/// Overlap a candidate must strictly exceed to count as a detection.
pub const DEFAULT_OVERLAP_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct LesionCandidate {
    pub id: usize,
    pub region: Region,
    /// Maximum probability over the region.
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceLesion {
    pub id: usize,
    pub region: Region,
}

/// Connected components of `mask`, each scored by the peak of `volume` inside it.
pub fn extract_candidates(
    volume: &ProbVolume,
    mask: &BinaryMask,
    connectivity: Connectivity,
) -> Result<Vec<LesionCandidate>> {
    if volume.dims() != mask.dims() {
        return Err(Error::DimensionMismatch(format!(
            "volume {:?} vs mask {:?}",
            volume.dims(),
            mask.dims()
        )));
    }
    Ok(connected_components(mask, connectivity)
        .into_iter()
        .enumerate()
        .map(|(id, region)| {
            let probability = region
                .voxels()
                .iter()
                .map(|&v| f64::from(volume.get(v)))
                .fold(0.0, f64::max);
            LesionCandidate {
                id,
                region,
                probability,
            }
        })
        .collect())
}

pub fn reference_lesions(mask: &BinaryMask, connectivity: Connectivity) -> Vec<ReferenceLesion> {
    connected_components(mask, connectivity)
        .into_iter()
        .enumerate()
        .map(|(id, region)| ReferenceLesion { id, region })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruePositive {
    pub candidate_id: usize,
    pub probability: f64,
    pub reference_id: usize,
    pub overlap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FalsePositive {
    pub candidate_id: usize,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DetectionOutcome {
    pub true_positives: Vec<TruePositive>,
    pub false_positives: Vec<FalsePositive>,
    pub false_negatives: Vec<usize>,
}

impl DetectionOutcome {
    pub fn reference_count(&self) -> usize {
        self.true_positives.len() + self.false_negatives.len()
    }

    pub fn candidate_count(&self) -> usize {
        self.true_positives.len() + self.false_positives.len()
    }
}

/// Greedy one-to-one matching by descending candidate probability.
///
/// Each candidate takes the still-unmatched reference with the highest IoU
/// (lowest id on ties) when that IoU is strictly above `tau`; otherwise it
/// is a false positive. References left over are false negatives.
pub fn match_lesions(
    candidates: &[LesionCandidate],
    reference: &[ReferenceLesion],
    tau: f64,
) -> Result<DetectionOutcome> {
    if !(0.0..1.0).contains(&tau) {
        return Err(Error::InvalidArgument(format!("overlap threshold must lie in [0,1), got {tau}")));
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        candidates[b]
            .probability
            .total_cmp(&candidates[a].probability)
            .then(candidates[a].id.cmp(&candidates[b].id))
    });

    let mut matched = vec![false; reference.len()];
    let mut outcome = DetectionOutcome::default();
    for c in order.into_iter().map(|i| &candidates[i]) {
        let mut best: Option<(usize, f64)> = None;
        for (r, lesion) in reference.iter().enumerate() {
            let overlap = c.region.iou(&lesion.region)?;
            if matched[r] {
                continue;
            }
            if best.is_none_or(|(_, o)| overlap > o) {
                best = Some((r, overlap));
            }
        }
        match best {
            Some((r, overlap)) if overlap > tau => {
                matched[r] = true;
                outcome.true_positives.push(TruePositive {
                    candidate_id: c.id,
                    probability: c.probability,
                    reference_id: reference[r].id,
                    overlap,
                });
            }
            _ => outcome.false_positives.push(FalsePositive {
                candidate_id: c.id,
                probability: c.probability,
            }),
        }
    }
    outcome.false_negatives = reference
        .iter()
        .zip(&matched)
        .filter(|(_, &m)| !m)
        .map(|(r, _)| r.id)
        .collect();
    Ok(outcome)
}

/// Exam-level detection score: the highest candidate probability, 0 without candidates.
pub fn exam_score(outcome: &DetectionOutcome) -> f64 {
    outcome
        .true_positives
        .iter()
        .map(|t| t.probability)
        .chain(outcome.false_positives.iter().map(|f| f.probability))
        .fold(0.0, f64::max)
}
