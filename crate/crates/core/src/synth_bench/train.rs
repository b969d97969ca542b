use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{augment, generate_dataset, SynthExam};
use super::encoder::Encoder;
use super::study::derive_seed;
use super::{StudyVariant, SynthConfig};
use crate::contrastive_loss::{
    partition_batch, BatchPartition, GradientBatch, LossBreakdown, Objective, ViewPairBatch,
};
use crate::error::{Error, Result};
use crate::metadata_kernel::{AnnotationSource, ConfidenceModel, MetadataSummary};

pub(crate) const INIT_STREAM: u64 = 0x1417;
pub(crate) const TRAIN_STREAM: u64 = 0x7a41;

/// Per-term means over the batches of one epoch where the term was present.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TermMeans {
    pub align_labeled: Option<f64>,
    pub unif_labeled: Option<f64>,
    pub align_unlabeled: Option<f64>,
    pub unif_unlabeled: Option<f64>,
}

#[derive(Default)]
struct TermAccumulator {
    sums: [f64; 4],
    counts: [usize; 4],
}

impl TermAccumulator {
    fn add(&mut self, loss: &LossBreakdown) {
        for (k, t) in loss.terms().iter().enumerate() {
            if t.present {
                self.sums[k] += t.value;
                self.counts[k] += 1;
            }
        }
    }

    fn means(&self) -> TermMeans {
        let m = |k: usize| (self.counts[k] > 0).then(|| self.sums[k] / self.counts[k] as f64);
        TermMeans {
            align_labeled: m(0),
            unif_labeled: m(1),
            align_unlabeled: m(2),
            unif_unlabeled: m(3),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub encoder: Encoder,
    /// Mean batch loss per epoch.
    pub loss_curve: Vec<f64>,
    pub final_terms: TermMeans,
}

/// Metadata summaries as seen by a study variant.
///
/// The biopsy variant raises epsilon to 1 for exams graded only by biopsy.
pub fn summarize_exams(exams: &[SynthExam], variant: StudyVariant, epsilon: f64) -> Result<Vec<MetadataSummary>> {
    let mut model = ConfidenceModel::new(epsilon)?;
    if variant == StudyVariant::Biopsy {
        let vectors: Vec<_> = exams.iter().map(|e| e.annotations.clone()).collect();
        model = model.with_source_override(&vectors, AnnotationSource::Isup, 1.0)?;
    }
    Ok(exams.iter().map(|e| model.summarize(&e.annotations)).collect())
}

/// Loss and view gradients of one batch under a study variant.
pub fn batch_objective_gradient(
    batch: &ViewPairBatch,
    summaries: &[MetadataSummary],
    variant: StudyVariant,
) -> Result<(LossBreakdown, GradientBatch)> {
    if summaries.len() != batch.len() {
        return Err(Error::Shape(format!(
            "{} summaries for a batch of {} rows",
            summaries.len(),
            batch.len()
        )));
    }
    let kernel_variant = variant.kernel_variant();
    let partition = if variant.uses_metadata() {
        partition_batch(summaries, kernel_variant)
    } else {
        BatchPartition::all_unlabeled(batch.len())
    };
    let kernel = partition.kernel(kernel_variant)?;
    Objective::Decoupled {
        partition: &partition,
        kernel: &kernel,
        global_uniformity: variant.global_uniformity(),
    }
    .gradient(batch)
}

fn augmented_rows(exams: &[SynthExam], rows: &[usize], sigma: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let dim = exams.first().map_or(0, |e| e.features.len());
    let mut out = Array2::zeros((rows.len(), dim));
    for (r, &i) in rows.iter().enumerate() {
        out.row_mut(r).assign(&augment(&exams[i].features, sigma, rng));
    }
    out
}

/// Trains on a freshly generated dataset seeded from `config.seed`.
pub fn train(config: &SynthConfig) -> Result<TrainOutcome> {
    let exams = generate_dataset(config, config.seed)?;
    train_on(
        config,
        &exams,
        derive_seed(&[config.seed, INIT_STREAM]),
        derive_seed(&[config.seed, TRAIN_STREAM]),
    )
}

/// Minibatch SGD with momentum on two augmented views per exam.
///
/// `init_seed` drives the weight initialization, `stream_seed` the batch
/// order and augmentation noise.
pub fn train_on(config: &SynthConfig, exams: &[SynthExam], init_seed: u64, stream_seed: u64) -> Result<TrainOutcome> {
    config.validate()?;
    if let Some(e) = exams.iter().find(|e| e.features.len() != config.input_dim) {
        return Err(Error::DimensionMismatch(format!(
            "exam {} has {} features, config expects {}",
            e.annotations.exam_id,
            e.features.len(),
            config.input_dim
        )));
    }
    let summaries = summarize_exams(exams, config.variant, config.epsilon)?;
    let mut init_rng = ChaCha8Rng::seed_from_u64(init_seed);
    let mut encoder = Encoder::new(
        config.input_dim,
        config.hidden,
        config.embed_dim,
        config.normalize_embeddings,
        &mut init_rng,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed);
    let mut velocity = encoder.zero_gradients();
    let mut order: Vec<usize> = (0..exams.len()).collect();
    let mut loss_curve = Vec::with_capacity(config.epochs);
    let mut final_terms = TermMeans::default();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        let mut terms = TermAccumulator::default();
        for (b, rows) in order.chunks(config.batch_size).enumerate() {
            let diverged = |detail: String| Error::Diverged { epoch, batch: b, detail };
            let c1 = encoder.forward_cached(&augmented_rows(exams, rows, config.aug_sigma, &mut rng));
            let c2 = encoder.forward_cached(&augmented_rows(exams, rows, config.aug_sigma, &mut rng));
            let batch = ViewPairBatch::new(c1.output().clone(), c2.output().clone())
                .map_err(|e| diverged(e.to_string()))?;
            let batch_summaries: Vec<MetadataSummary> = rows.iter().map(|&i| summaries[i].clone()).collect();
            let (loss, g) = batch_objective_gradient(&batch, &batch_summaries, config.variant)?;
            if !loss.total.is_finite() || !g.is_finite() {
                return Err(diverged(format!("non-finite loss {}", loss.total)));
            }
            let mut grads = encoder.backward(&c1, &g.g1);
            grads.add_assign(&encoder.backward(&c2, &g.g2));
            if !grads.is_finite() {
                return Err(diverged("non-finite parameter gradient".into()));
            }
            encoder.apply_update(&grads, &mut velocity, config.learning_rate, config.momentum);
            if !encoder.is_finite() {
                return Err(diverged("non-finite parameters".into()));
            }
            total += loss.total;
            batches += 1;
            terms.add(&loss);
        }
        loss_curve.push(if batches > 0 { total / batches as f64 } else { 0.0 });
        final_terms = terms.means();
    }
    Ok(TrainOutcome {
        encoder,
        loss_curve,
        final_terms,
    })
}
