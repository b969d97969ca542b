use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detection_metrics::roc_auc;
use crate::error::{Error, Result};

const MIN_SAMPLES: usize = 20;
const TRAIN_FRACTION: f64 = 0.7;
const ITERATIONS: usize = 500;
const STEP: f64 = 0.5;
const L2: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub accuracy: f64,
    pub auc: f64,
    pub n_train: usize,
    pub n_test: usize,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn has_both(labels: &[bool], rows: &[usize]) -> bool {
    rows.iter().any(|&i| labels[i]) && rows.iter().any(|&i| !labels[i])
}

fn split(labels: &[bool], seed: u64) -> Option<(Vec<usize>, Vec<usize>)> {
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (labels.len() as f64 * TRAIN_FRACTION).round() as usize;
    let test = order.split_off(n_train);
    (has_both(labels, &order) && has_both(labels, &test)).then_some((order, test))
}

/// Logistic-regression probe on frozen embeddings.
///
/// Features are standardized with training statistics; the split is 70/30
/// and is redrawn once if either side ends up single-class.
pub fn linear_probe(embeddings: &Array2<f64>, labels: &[bool], split_seed: u64) -> Result<ProbeResult> {
    let n = embeddings.nrows();
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} embeddings", labels.len())));
    }
    if n < MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!("linear probe needs at least {MIN_SAMPLES} exams, got {n}")));
    }
    if !has_both(labels, &(0..n).collect::<Vec<_>>()) {
        let positives = labels.iter().filter(|&&l| l).count();
        return Err(Error::AucUndefined {
            positives,
            negatives: n - positives,
        });
    }
    if embeddings.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("embedding entry".into()));
    }
    let (train_rows, test_rows) = split(labels, split_seed)
        .or_else(|| split(labels, split_seed.wrapping_add(1)))
        .ok_or_else(|| Error::InvalidArgument("could not draw a split with both classes on each side".into()))?;

    let train_x = embeddings.select(Axis(0), &train_rows);
    let mean = train_x.mean_axis(Axis(0)).expect("non-empty training split");
    let std = train_x.std_axis(Axis(0), 0.0).mapv(|s| if s > 0.0 { s } else { 1.0 });
    let standardize = |x: Array2<f64>| (x - &mean) / &std;
    let train_x = standardize(train_x);
    let test_x = standardize(embeddings.select(Axis(0), &test_rows));
    let train_y: Array1<f64> = train_rows.iter().map(|&i| if labels[i] { 1.0 } else { 0.0 }).collect();

    let m = train_x.nrows() as f64;
    let mut w = Array1::<f64>::zeros(train_x.ncols());
    let mut b = 0.0;
    for _ in 0..ITERATIONS {
        let p = (train_x.dot(&w) + b).mapv(sigmoid);
        let r = p - &train_y;
        let gw = train_x.t().dot(&r) / m + &w * L2;
        let gb = r.sum() / m;
        w.scaled_add(-STEP, &gw);
        b -= STEP * gb;
    }

    let scores: Vec<f64> = (test_x.dot(&w) + b).to_vec();
    let test_labels: Vec<bool> = test_rows.iter().map(|&i| labels[i]).collect();
    let correct = scores
        .iter()
        .zip(&test_labels)
        .filter(|(&s, &l)| (s > 0.0) == l)
        .count();
    Ok(ProbeResult {
        accuracy: correct as f64 / test_rows.len() as f64,
        auc: roc_auc(&scores, &test_labels)?,
        n_train: train_rows.len(),
        n_test: test_rows.len(),
    })
}
