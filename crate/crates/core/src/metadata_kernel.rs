//! Multi-annotator metadata: binarization, majority-vote confidence and the
//! pairwise kernel that conditions alignment and repulsion.
//!
//! Each exam carries a vector of binary votes (PI-RADS reports and biopsy
//! grades, binarized). Agreement among the votes defines a confidence in
//! `[0, 1]`; exams whose vote is tied, or who have no votes at all, are
//! treated as unlabeled. Two labeled exams are weighted by the smaller of
//! their confidences when their majority labels agree, and by zero otherwise.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default single-annotator confidence.
pub const DEFAULT_EPSILON: f64 = 0.1;

/// Off-diagonal weight used by the high-confidence and majority-voting ablations.
pub const ABLATION_WEIGHT: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotationSource {
    Pirads,
    Isup,
}

impl AnnotationSource {
    pub fn legal_range(self) -> (i64, i64) {
        match self {
            AnnotationSource::Pirads => (1, 5),
            AnnotationSource::Isup => (0, 5),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AnnotationSource::Pirads => "pirads",
            AnnotationSource::Isup => "isup",
        }
    }
}

impl std::str::FromStr for AnnotationSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pirads" => Ok(AnnotationSource::Pirads),
            "isup" => Ok(AnnotationSource::Isup),
            other => Err(Error::InvalidArgument(format!(
                "unknown annotation source {other:?} (expected pirads or isup)"
            ))),
        }
    }
}

/// One report for one exam, before binarization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawAnnotation {
    exam_id: String,
    source: AnnotationSource,
    value: i64,
}

impl RawAnnotation {
    pub fn new(exam_id: impl Into<String>, source: AnnotationSource, value: i64) -> Result<Self> {
        let exam_id = exam_id.into();
        let (lo, hi) = source.legal_range();
        if value < lo || value > hi {
            return Err(Error::AnnotationOutOfRange {
                exam_id,
                kind: source,
                value,
            });
        }
        Ok(Self {
            exam_id,
            source,
            value,
        })
    }

    pub fn exam_id(&self) -> &str {
        &self.exam_id
    }

    pub fn source(&self) -> AnnotationSource {
        self.source
    }

    pub fn value(&self) -> i64 {
        self.value
    }

    /// The binary vote, or `None` when the report abstains (PI-RADS 3).
    pub fn vote(&self) -> Option<Vote> {
        binarize(self.source, self.value)
            .expect("range checked at construction")
            .map(|value| Vote {
                value,
                source: self.source,
            })
    }
}

/// Maps a raw score to a binary vote. PI-RADS 3 abstains.
pub fn binarize(source: AnnotationSource, value: i64) -> Result<Option<bool>> {
    let (lo, hi) = source.legal_range();
    if value < lo || value > hi {
        return Err(Error::ValueOutOfRange { kind: source, value });
    }
    Ok(match source {
        AnnotationSource::Pirads => match value {
            1 | 2 => Some(false),
            3 => None,
            _ => Some(true),
        },
        AnnotationSource::Isup => Some(value >= 2),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub value: bool,
    pub source: AnnotationSource,
}

/// All binary votes available for one exam, abstentions removed.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AnnotationVector {
    pub exam_id: String,
    pub votes: Vec<Vote>,
}

impl AnnotationVector {
    pub fn new(exam_id: impl Into<String>) -> Self {
        Self {
            exam_id: exam_id.into(),
            votes: Vec::new(),
        }
    }

    /// Builds a vector whose votes all come from one source.
    pub fn from_values(
        exam_id: impl Into<String>,
        source: AnnotationSource,
        values: &[bool],
    ) -> Self {
        Self {
            exam_id: exam_id.into(),
            votes: values
                .iter()
                .map(|&value| Vote { value, source })
                .collect(),
        }
    }

    pub fn push(&mut self, annotation: &RawAnnotation) {
        if let Some(vote) = annotation.vote() {
            self.votes.push(vote);
        }
    }

    pub fn values(&self) -> Vec<bool> {
        self.votes.iter().map(|v| v.value).collect()
    }

    pub fn len(&self) -> usize {
        self.votes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.votes.is_empty()
    }

    /// True when every vote comes from `source` (and there is at least one).
    pub fn only_from(&self, source: AnnotationSource) -> bool {
        !self.votes.is_empty() && self.votes.iter().all(|v| v.source == source)
    }
}

/// Groups raw annotations per exam, keeping first-appearance order of exams.
/// Exams whose reports all abstain still appear, with an empty vote vector.
pub fn group_annotations(annotations: &[RawAnnotation]) -> Vec<AnnotationVector> {
    let mut order: Vec<AnnotationVector> = Vec::new();
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for a in annotations {
        let slot = *index.entry(a.exam_id()).or_insert_with(|| {
            order.push(AnnotationVector::new(a.exam_id()));
            order.len() - 1
        });
        order[slot].push(a);
    }
    order
}

/// Majority outcome of a non-empty vote vector as exact integer counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VoteCount {
    pub n: usize,
    pub positives: usize,
}

impl VoteCount {
    pub fn of(votes: &[bool]) -> Self {
        Self {
            n: votes.len(),
            positives: votes.iter().filter(|&&v| v).count(),
        }
    }

    /// Majority label, `None` on a tie.
    pub fn majority(self) -> Option<bool> {
        let negatives = self.n - self.positives;
        match self.positives.cmp(&negatives) {
            std::cmp::Ordering::Greater => Some(true),
            std::cmp::Ordering::Less => Some(false),
            std::cmp::Ordering::Equal => None,
        }
    }

    /// Confidence for n > 1 as the exact ratio `(2 * majority_count - n) / n`.
    fn agreement_ratio(self) -> (usize, usize) {
        let majority_count = self.positives.max(self.n - self.positives);
        (2 * majority_count - self.n, self.n)
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidEpsilon(epsilon))
    }
}

/// Agreement-based confidence of a vote vector.
///
/// A single vote gets `epsilon`. Otherwise the value is
/// `2 * (majority_count / n - 1/2)`, computed from integer counts and
/// rounded once; a tie yields exactly 0.
pub fn confidence(votes: &[bool], epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    match votes.len() {
        0 => Err(Error::EmptyVotes),
        1 => Ok(epsilon),
        _ => {
            let (num, den) = VoteCount::of(votes).agreement_ratio();
            Ok(num as f64 / den as f64)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum MetadataStatus {
    Labeled { label: bool, confidence: f64 },
    Unlabeled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetadataSummary {
    pub exam_id: String,
    pub status: MetadataStatus,
}

impl MetadataSummary {
    pub fn labeled(exam_id: impl Into<String>, label: bool, confidence: f64) -> Self {
        Self {
            exam_id: exam_id.into(),
            status: MetadataStatus::Labeled { label, confidence },
        }
    }

    pub fn unlabeled(exam_id: impl Into<String>) -> Self {
        Self {
            exam_id: exam_id.into(),
            status: MetadataStatus::Unlabeled,
        }
    }

    pub fn label(&self) -> Option<bool> {
        match self.status {
            MetadataStatus::Labeled { label, .. } => Some(label),
            MetadataStatus::Unlabeled => None,
        }
    }

    pub fn confidence(&self) -> Option<f64> {
        match self.status {
            MetadataStatus::Labeled { confidence, .. } => Some(confidence),
            MetadataStatus::Unlabeled => None,
        }
    }

    pub fn is_labeled(&self) -> bool {
        matches!(self.status, MetadataStatus::Labeled { .. })
    }
}

/// Confidence parameters: the single-vote epsilon plus per-exam overrides
/// (the biopsy ablation raises epsilon to 1 for biopsy-graded exams).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceModel {
    epsilon: f64,
    overrides: BTreeMap<String, f64>,
}

impl Default for ConfidenceModel {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            overrides: BTreeMap::new(),
        }
    }
}

impl ConfidenceModel {
    pub fn new(epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(Self {
            epsilon,
            overrides: BTreeMap::new(),
        })
    }

    pub fn with_override(mut self, exam_id: impl Into<String>, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        self.overrides.insert(exam_id.into(), epsilon);
        Ok(self)
    }

    /// Overrides epsilon for every exam whose votes all come from `source`.
    pub fn with_source_override(
        mut self,
        vectors: &[AnnotationVector],
        source: AnnotationSource,
        epsilon: f64,
    ) -> Result<Self> {
        check_epsilon(epsilon)?;
        for v in vectors.iter().filter(|v| v.only_from(source)) {
            self.overrides.insert(v.exam_id.clone(), epsilon);
        }
        Ok(self)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn epsilon_for(&self, exam_id: &str) -> f64 {
        self.overrides.get(exam_id).copied().unwrap_or(self.epsilon)
    }

    pub fn overrides(&self) -> &BTreeMap<String, f64> {
        &self.overrides
    }

    pub fn summarize(&self, votes: &AnnotationVector) -> MetadataSummary {
        let values = votes.values();
        let count = VoteCount::of(&values);
        let label = match count.majority() {
            Some(label) if count.n > 0 => label,
            _ => return MetadataSummary::unlabeled(votes.exam_id.clone()),
        };
        let c = confidence(&values, self.epsilon_for(&votes.exam_id))
            .expect("non-empty votes and validated epsilon");
        MetadataSummary::labeled(votes.exam_id.clone(), label, c)
    }
}

/// Summarizes one exam with an explicit epsilon and override map.
pub fn summarize(
    votes: &AnnotationVector,
    epsilon: f64,
    epsilon_overrides: &BTreeMap<String, f64>,
) -> Result<MetadataSummary> {
    let mut model = ConfidenceModel::new(epsilon)?;
    for (id, &eps) in epsilon_overrides {
        model = model.with_override(id.clone(), eps)?;
    }
    Ok(model.summarize(votes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelVariant {
    /// `min(c_i, c_j)` for equal majority labels, 0 otherwise.
    #[default]
    Proposed,
    /// Only fully confident exams participate; equal labels weigh 0.8.
    HighConfidence,
    /// Confidence ignored; equal majority labels weigh 0.8.
    MajorityVoting,
}

impl KernelVariant {
    /// Whether a labeled exam with this confidence stays in the labeled partition.
    pub fn admits(self, confidence: f64) -> bool {
        match self {
            KernelVariant::HighConfidence => confidence == 1.0,
            KernelVariant::Proposed | KernelVariant::MajorityVoting => true,
        }
    }
}

/// Kernel weight between two exams.
///
/// Self pairs always weigh 1 and need no metadata. Off-diagonal pairs
/// require both summaries to be labeled.
pub fn pair_weight(
    s_i: &MetadataSummary,
    s_j: &MetadataSummary,
    same_exam: bool,
    variant: KernelVariant,
) -> Result<f64> {
    if same_exam {
        return Ok(1.0);
    }
    let (label_i, c_i) = labeled_parts(s_i)?;
    let (label_j, c_j) = labeled_parts(s_j)?;
    if label_i != label_j {
        return Ok(0.0);
    }
    Ok(match variant {
        KernelVariant::Proposed => c_i.min(c_j),
        KernelVariant::HighConfidence => {
            if c_i == 1.0 && c_j == 1.0 {
                ABLATION_WEIGHT
            } else {
                0.0
            }
        }
        KernelVariant::MajorityVoting => ABLATION_WEIGHT,
    })
}

fn labeled_parts(s: &MetadataSummary) -> Result<(bool, f64)> {
    match s.status {
        MetadataStatus::Labeled { label, confidence } => Ok((label, confidence)),
        MetadataStatus::Unlabeled => Err(Error::UnlabeledPair(s.exam_id.clone())),
    }
}

/// Square matrix of pairwise kernel weights with unit diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelMatrix {
    weights: Array2<f64>,
}

impl KernelMatrix {
    /// Wraps a weight matrix after checking shape, range and unit diagonal.
    pub fn new(weights: Array2<f64>) -> Result<Self> {
        let (rows, cols) = weights.dim();
        if rows != cols {
            return Err(Error::Shape(format!("kernel must be square, got {rows}x{cols}")));
        }
        for ((i, j), &w) in weights.indexed_iter() {
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::InvalidArgument(format!(
                    "kernel entry ({i},{j}) = {w} outside [0,1]"
                )));
            }
            if i == j && w != 1.0 {
                return Err(Error::InvalidArgument(format!(
                    "kernel diagonal entry ({i},{i}) = {w}, expected 1"
                )));
            }
        }
        Ok(Self { weights })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            weights: Array2::eye(n),
        }
    }

    pub fn len(&self) -> usize {
        self.weights.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.nrows() == 0
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    /// Companion mask marking same-exam entries.
    pub fn self_pair_mask(&self) -> Array2<bool> {
        Array2::from_shape_fn(self.weights.dim(), |(i, j)| i == j)
    }

    /// `max |w|`, which is the unit diagonal for any valid kernel.
    pub fn sup_norm(&self) -> f64 {
        self.weights.iter().copied().fold(0.0, f64::max)
    }
}

/// Evaluates [`pair_weight`] for every pair of a batch of labeled exams.
pub fn kernel_matrix(summaries: &[MetadataSummary], variant: KernelVariant) -> Result<KernelMatrix> {
    let n = summaries.len();
    let mut weights = Array2::zeros((n, n));
    for i in 0..n {
        weights[(i, i)] = 1.0;
        for j in (i + 1)..n {
            let w = pair_weight(&summaries[i], &summaries[j], false, variant)?;
            weights[(i, j)] = w;
            weights[(j, i)] = w;
        }
    }
    Ok(KernelMatrix { weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labeled(label: bool, c: f64) -> MetadataSummary {
        MetadataSummary::labeled("x", label, c)
    }

    #[test]
    fn binarize_rules() {
        use AnnotationSource::*;
        assert_eq!(binarize(Pirads, 1).unwrap(), Some(false));
        assert_eq!(binarize(Pirads, 2).unwrap(), Some(false));
        assert_eq!(binarize(Pirads, 3).unwrap(), None);
        assert_eq!(binarize(Pirads, 4).unwrap(), Some(true));
        assert_eq!(binarize(Pirads, 5).unwrap(), Some(true));
        assert_eq!(binarize(Isup, 0).unwrap(), Some(false));
        assert_eq!(binarize(Isup, 1).unwrap(), Some(false));
        assert_eq!(binarize(Isup, 2).unwrap(), Some(true));
        assert_eq!(binarize(Isup, 5).unwrap(), Some(true));
    }

    #[test]
    fn out_of_range_is_rejected_with_exam_id() {
        assert!(binarize(AnnotationSource::Pirads, 0).is_err());
        assert!(binarize(AnnotationSource::Isup, 6).is_err());
        match RawAnnotation::new("exam-7", AnnotationSource::Pirads, 6) {
            Err(Error::AnnotationOutOfRange { exam_id, value, .. }) => {
                assert_eq!(exam_id, "exam-7");
                assert_eq!(value, 6);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn confidence_examples() {
        assert_eq!(confidence(&[true], 0.1).unwrap(), 0.1);
        let c = confidence(&[true, true, true, true, false, false, false], 0.1).unwrap();
        assert_eq!(c, 1.0 / 7.0);
        assert!((c - 0.142857).abs() < 1e-6);
        assert_eq!(confidence(&[true, false], 0.1).unwrap(), 0.0);
        assert_eq!(confidence(&[false, false, false], 0.1).unwrap(), 1.0);
        assert!(matches!(confidence(&[], 0.1), Err(Error::EmptyVotes)));
        assert!(matches!(confidence(&[true], 0.0), Err(Error::InvalidEpsilon(_))));
        assert!(matches!(confidence(&[true], 1.5), Err(Error::InvalidEpsilon(_))));
    }

    #[test]
    fn summarize_examples() {
        let none = BTreeMap::new();
        let empty = AnnotationVector::new("a");
        assert_eq!(
            summarize(&empty, 0.1, &none).unwrap().status,
            MetadataStatus::Unlabeled
        );

        let tied = AnnotationVector::from_values("b", AnnotationSource::Pirads, &[true, true, false, false]);
        assert_eq!(
            summarize(&tied, 0.1, &none).unwrap().status,
            MetadataStatus::Unlabeled
        );

        let biopsy = AnnotationVector::from_values("c", AnnotationSource::Isup, &[true]);
        let mut overrides = BTreeMap::new();
        overrides.insert("c".to_string(), 1.0);
        assert_eq!(
            summarize(&biopsy, 0.1, &overrides).unwrap().status,
            MetadataStatus::Labeled {
                label: true,
                confidence: 1.0
            }
        );
        assert_eq!(
            summarize(&biopsy, 0.1, &none).unwrap().confidence(),
            Some(0.1)
        );
    }

    #[test]
    fn source_override_targets_pure_biopsy_exams() {
        let vectors = vec![
            AnnotationVector::from_values("isup", AnnotationSource::Isup, &[true]),
            AnnotationVector::from_values("pirads", AnnotationSource::Pirads, &[true]),
        ];
        let model = ConfidenceModel::default()
            .with_source_override(&vectors, AnnotationSource::Isup, 1.0)
            .unwrap();
        assert_eq!(model.summarize(&vectors[0]).confidence(), Some(1.0));
        assert_eq!(model.summarize(&vectors[1]).confidence(), Some(0.1));
    }

    #[test]
    fn pirads_three_only_exam_is_unlabeled() {
        let rows = vec![
            RawAnnotation::new("e1", AnnotationSource::Pirads, 3).unwrap(),
            RawAnnotation::new("e2", AnnotationSource::Pirads, 4).unwrap(),
            RawAnnotation::new("e1", AnnotationSource::Pirads, 3).unwrap(),
        ];
        let grouped = group_annotations(&rows);
        assert_eq!(grouped.len(), 2);
        assert_eq!(grouped[0].exam_id, "e1");
        assert!(grouped[0].is_empty());
        assert!(!ConfidenceModel::default().summarize(&grouped[0]).is_labeled());
    }

    #[test]
    fn pair_weight_examples() {
        let model = ConfidenceModel::default();
        let i = model.summarize(&AnnotationVector::from_values("i", AnnotationSource::Pirads, &[true, true, true]));
        let j = model.summarize(&AnnotationVector::from_values("j", AnnotationSource::Pirads, &[true, true, false]));
        assert_eq!(i.confidence(), Some(1.0));
        assert_eq!(j.confidence(), Some(1.0 / 3.0));

        assert_eq!(pair_weight(&i, &i, true, KernelVariant::Proposed).unwrap(), 1.0);
        assert_eq!(pair_weight(&i, &j, false, KernelVariant::Proposed).unwrap(), 1.0 / 3.0);
        assert_eq!(
            pair_weight(&labeled(false, 1.0), &labeled(true, 1.0), false, KernelVariant::Proposed).unwrap(),
            0.0
        );
        assert_eq!(pair_weight(&i, &j, false, KernelVariant::MajorityVoting).unwrap(), 0.8);
        assert_eq!(pair_weight(&i, &j, false, KernelVariant::HighConfidence).unwrap(), 0.0);
        assert_eq!(pair_weight(&i, &i.clone(), false, KernelVariant::HighConfidence).unwrap(), 0.8);
    }

    #[test]
    fn unlabeled_off_diagonal_is_an_error() {
        let u = MetadataSummary::unlabeled("u");
        assert_eq!(pair_weight(&u, &u, true, KernelVariant::Proposed).unwrap(), 1.0);
        assert!(matches!(
            pair_weight(&u, &labeled(true, 1.0), false, KernelVariant::Proposed),
            Err(Error::UnlabeledPair(id)) if id == "u"
        ));
        assert!(kernel_matrix(&[labeled(true, 1.0), u], KernelVariant::Proposed).is_err());
    }

    #[test]
    fn kernel_matrix_examples() {
        let k = kernel_matrix(&[labeled(true, 0.5)], KernelVariant::Proposed).unwrap();
        assert_eq!(k.weights(), &ndarray::arr2(&[[1.0]]));

        let k = kernel_matrix(&[labeled(true, 1.0), labeled(true, 1.0 / 7.0)], KernelVariant::Proposed).unwrap();
        assert_eq!(k.get(0, 1), 1.0 / 7.0);
        assert_eq!(k.get(1, 0), 1.0 / 7.0);

        let k = kernel_matrix(&[labeled(true, 1.0), labeled(false, 1.0)], KernelVariant::Proposed).unwrap();
        assert_eq!(k.get(0, 1), 0.0);
        assert_eq!(k.sup_norm(), 1.0);
        assert!(k.self_pair_mask()[(1, 1)]);
    }

    #[test]
    fn kernel_matrix_validation() {
        assert!(KernelMatrix::new(ndarray::arr2(&[[1.0, 0.2], [0.2, 0.9]])).is_err());
        assert!(KernelMatrix::new(ndarray::arr2(&[[1.0, 1.2], [0.2, 1.0]])).is_err());
        assert!(KernelMatrix::new(Array2::zeros((2, 3))).is_err());
        assert!(KernelMatrix::new(Array2::eye(3)).is_ok());
    }

    proptest! {
        #[test]
        fn confidence_is_permutation_invariant(votes in proptest::collection::vec(any::<bool>(), 1..12), seed in any::<u64>()) {
            let mut shuffled = votes.clone();
            // deterministic Fisher-Yates driven by the seed
            let mut s = seed;
            for i in (1..shuffled.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let j = (s >> 33) as usize % (i + 1);
                shuffled.swap(i, j);
            }
            prop_assert_eq!(confidence(&votes, 0.1).unwrap(), confidence(&shuffled, 0.1).unwrap());
            prop_assert_eq!(VoteCount::of(&votes).majority(), VoteCount::of(&shuffled).majority());
        }

        #[test]
        fn confidence_in_unit_interval(votes in proptest::collection::vec(any::<bool>(), 1..20)) {
            let c = confidence(&votes, 0.1).unwrap();
            prop_assert!((0.0..=1.0).contains(&c));
            let unanimous = votes.iter().all(|&v| v == votes[0]);
            prop_assert_eq!(c == 1.0, unanimous && votes.len() > 1);
        }

        #[test]
        fn confidence_increases_with_majority(n in 2usize..15, k in 0usize..15) {
            prop_assume!(k < n && 2 * k >= n);
            let votes = |m: usize| -> Vec<bool> { (0..n).map(|i| i < m).collect() };
            prop_assert!(confidence(&votes(k + 1), 0.1).unwrap() > confidence(&votes(k), 0.1).unwrap());
        }

        #[test]
        fn pair_weight_symmetric(
            li in any::<bool>(), lj in any::<bool>(),
            ci in prop_oneof![Just(1.0), 0.01f64..1.0],
            cj in prop_oneof![Just(1.0), 0.01f64..1.0],
        ) {
            let (a, b) = (labeled(li, ci), labeled(lj, cj));
            for v in [KernelVariant::Proposed, KernelVariant::HighConfidence, KernelVariant::MajorityVoting] {
                prop_assert_eq!(pair_weight(&a, &b, false, v).unwrap(), pair_weight(&b, &a, false, v).unwrap());
            }
        }
    }
}
