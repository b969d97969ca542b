//! Desk-scale benchmark for the contrastive objectives.
//!
//! Synthetic exams have a latent binary class, Gaussian features and a
//! handful of noisy annotator votes. A one-hidden-layer encoder is trained
//! with each loss/kernel variant and the frozen embeddings are scored with a
//! linear probe, giving an ablation table with one row per variant.

mod data;
mod encoder;
mod probe;
mod study;
mod train;

pub use data::{augment, generate_dataset, simulate_annotators, simulate_biopsy, SynthExam};
pub use encoder::{Encoder, EncoderGradients, ForwardCache};
pub use probe::{linear_probe, ProbeResult};
pub use study::{
    derive_seed, embedding_statistics, run_study, CellMetrics, CellRecord, MeanStd, StudyReport, VariantSummary,
};
pub use train::{batch_objective_gradient, summarize_exams, train, train_on, TermMeans, TrainOutcome};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metadata_kernel::{KernelVariant, DEFAULT_EPSILON};

/// One row of the ablation table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StudyVariant {
    /// Confidence kernel on labeled exams, metadata-free loss on the rest.
    #[serde(rename = "proposed")]
    Proposed,
    /// Only fully confident exams are treated as labeled; equal labels weigh 0.8.
    #[serde(rename = "hc")]
    HighConfidence,
    /// Equal majority labels weigh 0.8 regardless of confidence.
    #[serde(rename = "majority")]
    MajorityVoting,
    /// Proposed kernel with biopsy-only exams raised to confidence 1.
    #[serde(rename = "biopsy")]
    Biopsy,
    /// Proposed alignment, unconditioned repulsion among labeled exams.
    #[serde(rename = "glu")]
    GlobalUniformity,
    /// Every exam treated as unlabeled.
    #[serde(rename = "unsupervised")]
    Unsupervised,
}

impl StudyVariant {
    pub const ALL: [StudyVariant; 6] = [
        StudyVariant::Proposed,
        StudyVariant::HighConfidence,
        StudyVariant::MajorityVoting,
        StudyVariant::Biopsy,
        StudyVariant::GlobalUniformity,
        StudyVariant::Unsupervised,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StudyVariant::Proposed => "proposed",
            StudyVariant::HighConfidence => "hc",
            StudyVariant::MajorityVoting => "majority",
            StudyVariant::Biopsy => "biopsy",
            StudyVariant::GlobalUniformity => "glu",
            StudyVariant::Unsupervised => "unsupervised",
        }
    }

    /// Stable position used when deriving per-cell seeds.
    pub fn index(self) -> u64 {
        Self::ALL.iter().position(|&v| v == self).expect("listed") as u64
    }

    pub fn kernel_variant(self) -> KernelVariant {
        match self {
            StudyVariant::HighConfidence => KernelVariant::HighConfidence,
            StudyVariant::MajorityVoting => KernelVariant::MajorityVoting,
            _ => KernelVariant::Proposed,
        }
    }

    pub fn global_uniformity(self) -> bool {
        self == StudyVariant::GlobalUniformity
    }

    pub fn uses_metadata(self) -> bool {
        self != StudyVariant::Unsupervised
    }
}

impl std::fmt::Display for StudyVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for StudyVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s.trim())
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown variant {s:?} (expected one of proposed, hc, majority, biopsy, glu, unsupervised)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatorParams {
    pub n_min: usize,
    pub n_max: usize,
    pub p_flip: f64,
    pub p_abstain: f64,
}

impl Default for AnnotatorParams {
    fn default() -> Self {
        Self {
            n_min: 1,
            n_max: 7,
            p_flip: 0.3,
            p_abstain: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_exams: usize,
    pub input_dim: usize,
    pub hidden: usize,
    pub embed_dim: usize,
    pub class_separation: f64,
    pub noise_sigma: f64,
    pub aug_sigma: f64,
    pub annotator: AnnotatorParams,
    pub frac_unlabeled: f64,
    /// Share of exams graded by a single biopsy vote instead of radiologists.
    pub frac_biopsy: f64,
    pub biopsy_p_flip: f64,
    pub variant: StudyVariant,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    pub normalize_embeddings: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_exams: 512,
            input_dim: 16,
            hidden: 32,
            embed_dim: 8,
            class_separation: 2.0,
            noise_sigma: 1.0,
            aug_sigma: 0.5,
            annotator: AnnotatorParams::default(),
            frac_unlabeled: 0.3,
            frac_biopsy: 0.25,
            biopsy_p_flip: 0.1,
            variant: StudyVariant::Proposed,
            epsilon: DEFAULT_EPSILON,
            epochs: 30,
            batch_size: 16,
            learning_rate: 1e-2,
            momentum: 0.9,
            seed: 0,
            normalize_embeddings: true,
        }
    }
}

fn probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must lie in [0,1], got {p}")))
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let a = &self.annotator;
        if !(1 <= a.n_min && a.n_min <= a.n_max && a.n_max <= 7) {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= n_min <= n_max <= 7, got n_min={} n_max={}",
                a.n_min, a.n_max
            )));
        }
        probability("p_flip", a.p_flip)?;
        probability("p_abstain", a.p_abstain)?;
        probability("frac_unlabeled", self.frac_unlabeled)?;
        probability("frac_biopsy", self.frac_biopsy)?;
        probability("biopsy_p_flip", self.biopsy_p_flip)?;
        if self.input_dim == 0 || self.hidden == 0 || self.embed_dim == 0 {
            return Err(Error::InvalidArgument("input_dim, hidden and embed_dim must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be positive".into()));
        }
        for (name, v) in [
            ("class_separation", self.class_separation),
            ("noise_sigma", self.noise_sigma),
            ("aug_sigma", self.aug_sigma),
            ("learning_rate", self.learning_rate),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument(format!("momentum must lie in [0,1), got {}", self.momentum)));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::InvalidEpsilon(self.epsilon));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: SynthConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in StudyVariant::ALL {
            assert_eq!(v.name().parse::<StudyVariant>().unwrap(), v);
            assert_eq!(serde_json::to_string(&v).unwrap(), format!("\"{}\"", v.name()));
        }
        assert!("simclr".parse::<StudyVariant>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SynthConfig::default().validate().is_ok());
        let mut c = SynthConfig::default();
        c.annotator.n_max = 8;
        assert!(c.validate().is_err());
        let mut c = SynthConfig::default();
        c.annotator.n_min = 0;
        assert!(c.validate().is_err());
        let c = SynthConfig { frac_unlabeled: 1.5, ..Default::default() };
        assert!(c.validate().is_err());
        assert!(SynthConfig::from_json(r#"{"n_exams": 10, "bogus": 1}"#).is_err());
        assert_eq!(SynthConfig::from_json(r#"{"n_exams": 10}"#).unwrap().n_exams, 10);
    }

    #[test]
    fn committed_config_matches_defaults() {
        let text = include_str!("../../../../configs/default_study.json");
        assert_eq!(SynthConfig::from_json(text).unwrap(), SynthConfig::default());
    }
}
