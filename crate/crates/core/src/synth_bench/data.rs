use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{AnnotatorParams, SynthConfig};
use crate::error::Result;
use crate::metadata_kernel::{AnnotationSource, AnnotationVector, Vote};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthExam {
    pub true_label: bool,
    pub features: Array1<f64>,
    pub annotations: AnnotationVector,
}

fn gaussian(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("validated non-negative sigma")
}

/// Radiologist-style votes for one exam.
///
/// Draws `n` uniformly in `[n_min, n_max]`; each annotator abstains with
/// `p_abstain`, otherwise reports the true label flipped with `p_flip`.
/// With probability `frac_unlabeled` the whole vector is dropped.
pub fn simulate_annotators<R: Rng>(
    exam_id: &str,
    true_label: bool,
    params: &AnnotatorParams,
    frac_unlabeled: f64,
    rng: &mut R,
) -> AnnotationVector {
    let n = rng.random_range(params.n_min..=params.n_max);
    let mut out = AnnotationVector::new(exam_id);
    for _ in 0..n {
        if rng.random_bool(params.p_abstain) {
            continue;
        }
        let flipped = rng.random_bool(params.p_flip);
        out.votes.push(Vote {
            value: true_label ^ flipped,
            source: AnnotationSource::Pirads,
        });
    }
    if rng.random_bool(frac_unlabeled) {
        out.votes.clear();
    }
    out
}

/// A single biopsy vote, flipped with `p_flip`, dropped with `frac_unlabeled`.
pub fn simulate_biopsy<R: Rng>(
    exam_id: &str,
    true_label: bool,
    p_flip: f64,
    frac_unlabeled: f64,
    rng: &mut R,
) -> AnnotationVector {
    let flipped = rng.random_bool(p_flip);
    let mut out = AnnotationVector::new(exam_id);
    out.votes.push(Vote {
        value: true_label ^ flipped,
        source: AnnotationSource::Isup,
    });
    if rng.random_bool(frac_unlabeled) {
        out.votes.clear();
    }
    out
}

/// Adds isotropic Gaussian noise of scale `sigma`.
pub fn augment<R: Rng>(features: &Array1<f64>, sigma: f64, rng: &mut R) -> Array1<f64> {
    if sigma == 0.0 {
        return features.clone();
    }
    let noise = gaussian(sigma);
    features.mapv(|v| v + noise.sample(rng))
}

/// Balanced synthetic exams with class means at `+-class_separation/2` on the first axis.
pub fn generate_dataset(config: &SynthConfig, seed: u64) -> Result<Vec<SynthExam>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<bool> = (0..config.n_exams).map(|i| i >= config.n_exams / 2).collect();
    labels.shuffle(&mut rng);
    let noise = gaussian(config.noise_sigma);
    let half = config.class_separation / 2.0;
    Ok(labels
        .into_iter()
        .enumerate()
        .map(|(i, true_label)| {
            let mut features = Array1::from_shape_fn(config.input_dim, |_| noise.sample(&mut rng));
            features[0] += if true_label { half } else { -half };
            let exam_id = format!("exam-{i:05}");
            let annotations = if rng.random_bool(config.frac_biopsy) {
                simulate_biopsy(&exam_id, true_label, config.biopsy_p_flip, config.frac_unlabeled, &mut rng)
            } else {
                simulate_annotators(&exam_id, true_label, &config.annotator, config.frac_unlabeled, &mut rng)
            };
            SynthExam {
                true_label,
                features,
                annotations,
            }
        })
        .collect())
}
