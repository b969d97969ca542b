//! Alignment/uniformity contrastive objectives and their analytic gradients.
//!
//! Three objectives are provided, all built on the smoothed distance
//! `d_ij = sqrt(|x1_i - x2_j|^2 + eps_d^2)` between the first view of exam
//! `i` and the second view of exam `j`:
//!
//! - **global**: `(1/N) sum_i d_ii + log((1/N^2) sum_ij exp(-d_ij))`
//! - **conditional**: `(1/N) sum_ij w_ij d_ij + log((1/N^2) sum_ij (1 - w_ij) exp(-d_ij))`
//! - **decoupled**: the conditional objective over the labeled subset `A`
//!   plus the global objective (without self pairs in the uniformity) over
//!   the unlabeled subset `U`. The two subsets never interact.
//!
//! Every objective is a sum of *terms*, each a function of the distance
//! matrix. Terms report their partial derivatives with respect to `d_ij`
//! ([`DistanceGradients`]) and the chain rule through the smoothed norm
//! turns those into gradients for both views ([`GradientBatch`]).

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metadata_kernel::{kernel_matrix, KernelMatrix, KernelVariant, MetadataSummary};

/// Smoothing added under the square root of every distance.
pub const NORM_SMOOTHING: f64 = 1e-8;

/// Two embedding views of the same `N` exams, row `i` of each referring to exam `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewPairBatch {
    x1: Array2<f64>,
    x2: Array2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum View {
    First,
    Second,
}

impl ViewPairBatch {
    pub fn new(x1: Array2<f64>, x2: Array2<f64>) -> Result<Self> {
        if x1.dim() != x2.dim() {
            return Err(Error::Shape(format!(
                "views differ in shape: {:?} vs {:?}",
                x1.dim(),
                x2.dim()
            )));
        }
        if x1.nrows() == 0 || x1.ncols() == 0 {
            return Err(Error::Shape(format!("empty batch {:?}", x1.dim())));
        }
        if x1.iter().chain(x2.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding batch".into()));
        }
        Ok(Self { x1, x2 })
    }

    pub fn x1(&self) -> &Array2<f64> {
        &self.x1
    }

    pub fn x2(&self) -> &Array2<f64> {
        &self.x2
    }

    pub fn view(&self, view: View) -> &Array2<f64> {
        match view {
            View::First => &self.x1,
            View::Second => &self.x2,
        }
    }

    pub fn len(&self) -> usize {
        self.x1.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x1.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x1.ncols()
    }

    pub fn into_parts(self) -> (Array2<f64>, Array2<f64>) {
        (self.x1, self.x2)
    }

    /// Copy with one coordinate shifted by `delta`.
    pub fn perturbed(&self, view: View, row: usize, col: usize, delta: f64) -> Self {
        let mut out = self.clone();
        match view {
            View::First => out.x1[(row, col)] += delta,
            View::Second => out.x2[(row, col)] += delta,
        }
        out
    }

    /// Adds `shift` to every row of both views.
    pub fn translated(&self, shift: &[f64]) -> Result<Self> {
        if shift.len() != self.dim() {
            return Err(Error::Shape(format!(
                "shift has {} entries, batch has dimension {}",
                shift.len(),
                self.dim()
            )));
        }
        let shift = ArrayView1::from(shift);
        let mut out = self.clone();
        for mut row in out.x1.rows_mut().into_iter().chain(out.x2.rows_mut()) {
            row += &shift;
        }
        Ok(out)
    }

    /// Reorders rows so that new row `k` is old row `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            x1: self.x1.select(Axis(0), perm),
            x2: self.x2.select(Axis(0), perm),
        }
    }
}

/// `d_ij = sqrt(|x1_i - x2_j|^2 + eps_d^2)` for all pairs.
pub fn pairwise_distances(batch: &ViewPairBatch) -> Array2<f64> {
    let n = batch.len();
    let mut d = Array2::zeros((n, n));
    for (i, a) in batch.x1.rows().into_iter().enumerate() {
        for (j, b) in batch.x2.rows().into_iter().enumerate() {
            let sq: f64 = a.iter().zip(b.iter()).map(|(p, q)| (p - q) * (p - q)).sum();
            d[(i, j)] = (sq + NORM_SMOOTHING * NORM_SMOOTHING).sqrt();
        }
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Term {
    pub value: f64,
    pub present: bool,
}

impl Term {
    fn present(value: f64) -> Self {
        Self {
            value,
            present: true,
        }
    }

    fn absent() -> Self {
        Self::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    Global,
    Conditional,
    Decoupled,
}

/// Term values of one loss evaluation.
///
/// The global objective reports in the metadata-free (`*_unlabeled`) slots
/// and the conditional objective in the `*_labeled` slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub objective: ObjectiveKind,
    pub align_labeled: Term,
    pub unif_labeled: Term,
    pub align_unlabeled: Term,
    pub unif_unlabeled: Term,
    /// Normalization applied to the labeled alignment double sum
    /// (`1/N` for the conditional objective, `1/|A|` for the decoupled one).
    pub labeled_alignment_scale: f64,
    /// The labeled uniformity sum had no nonzero weight and was skipped.
    pub labeled_uniformity_degenerate: bool,
    pub total: f64,
}

impl LossBreakdown {
    fn new(objective: ObjectiveKind) -> Self {
        Self {
            objective,
            align_labeled: Term::absent(),
            unif_labeled: Term::absent(),
            align_unlabeled: Term::absent(),
            unif_unlabeled: Term::absent(),
            labeled_alignment_scale: 0.0,
            labeled_uniformity_degenerate: false,
            total: 0.0,
        }
    }

    fn finish(mut self) -> Self {
        self.total = self
            .terms()
            .iter()
            .filter(|t| t.present)
            .map(|t| t.value)
            .sum();
        self
    }

    pub fn terms(&self) -> [Term; 4] {
        [
            self.align_labeled,
            self.unif_labeled,
            self.align_unlabeled,
            self.unif_unlabeled,
        ]
    }
}

/// Gradients of the total loss with respect to both views.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBatch {
    pub g1: Array2<f64>,
    pub g2: Array2<f64>,
}

impl GradientBatch {
    pub fn zeros(n: usize, dim: usize) -> Self {
        Self {
            g1: Array2::zeros((n, dim)),
            g2: Array2::zeros((n, dim)),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.g1.iter().chain(self.g2.iter()).all(|v| v.is_finite())
    }

    pub fn view(&self, view: View) -> &Array2<f64> {
        match view {
            View::First => &self.g1,
            View::Second => &self.g2,
        }
    }
}

/// Partial derivatives of each loss term with respect to every `d_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceGradients {
    pub align_labeled: Array2<f64>,
    pub unif_labeled: Array2<f64>,
    pub align_unlabeled: Array2<f64>,
    pub unif_unlabeled: Array2<f64>,
}

impl DistanceGradients {
    fn zeros(n: usize) -> Self {
        Self {
            align_labeled: Array2::zeros((n, n)),
            unif_labeled: Array2::zeros((n, n)),
            align_unlabeled: Array2::zeros((n, n)),
            unif_unlabeled: Array2::zeros((n, n)),
        }
    }

    pub fn total(&self) -> Array2<f64> {
        &self.align_labeled + &self.unif_labeled + &self.align_unlabeled + &self.unif_unlabeled
    }
}

/// Split of batch rows into the labeled subset `A` and unlabeled subset `U`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchPartition {
    labeled: Vec<usize>,
    summaries: Vec<MetadataSummary>,
    unlabeled: Vec<usize>,
}

impl BatchPartition {
    /// Builds a partition, checking that it covers `0..n` exactly once and
    /// that every labeled row carries a labeled summary.
    pub fn new(labeled: Vec<(usize, MetadataSummary)>, unlabeled: Vec<usize>, n: usize) -> Result<Self> {
        let mut seen = vec![false; n];
        for idx in labeled.iter().map(|(i, _)| *i).chain(unlabeled.iter().copied()) {
            if idx >= n || std::mem::replace(&mut seen[idx], true) {
                return Err(Error::InvalidArgument(format!(
                    "partition index {idx} out of range or repeated (batch of {n})"
                )));
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidArgument(format!("row {missing} missing from partition")));
        }
        if let Some((_, s)) = labeled.iter().find(|(_, s)| !s.is_labeled()) {
            return Err(Error::UnlabeledPair(s.exam_id.clone()));
        }
        let (labeled, summaries) = labeled.into_iter().unzip();
        Ok(Self {
            labeled,
            summaries,
            unlabeled,
        })
    }

    pub fn all_unlabeled(n: usize) -> Self {
        Self {
            labeled: Vec::new(),
            summaries: Vec::new(),
            unlabeled: (0..n).collect(),
        }
    }

    pub fn labeled(&self) -> &[usize] {
        &self.labeled
    }

    pub fn labeled_summaries(&self) -> &[MetadataSummary] {
        &self.summaries
    }

    pub fn unlabeled(&self) -> &[usize] {
        &self.unlabeled
    }

    pub fn len(&self) -> usize {
        self.labeled.len() + self.unlabeled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Kernel over the labeled subset, indexed like [`Self::labeled`].
    pub fn kernel(&self, variant: KernelVariant) -> Result<KernelMatrix> {
        kernel_matrix(&self.summaries, variant)
    }
}

/// Routes each batch row to `A` or `U`.
///
/// Unlabeled summaries go to `U`. Under [`KernelVariant::HighConfidence`]
/// labeled exams with confidence below 1 also go to `U`.
pub fn partition_batch(summaries: &[MetadataSummary], variant: KernelVariant) -> BatchPartition {
    let mut labeled = Vec::new();
    let mut out_summaries = Vec::new();
    let mut unlabeled = Vec::new();
    for (i, s) in summaries.iter().enumerate() {
        match s.confidence() {
            Some(c) if variant.admits(c) => {
                labeled.push(i);
                out_summaries.push(s.clone());
            }
            _ => unlabeled.push(i),
        }
    }
    BatchPartition {
        labeled,
        summaries: out_summaries,
        unlabeled,
    }
}

/// A weighted distance pair `(i, j, weight)` in batch coordinates.
type Pair = (usize, usize, f64);

/// `scale * sum w d_ij`, accumulating `scale * w` into `grad`.
fn alignment_term(d: &Array2<f64>, pairs: &[Pair], scale: f64, grad: &mut Array2<f64>) -> f64 {
    let mut sum = 0.0;
    for &(i, j, w) in pairs {
        sum += w * d[(i, j)];
        grad[(i, j)] += scale * w;
    }
    scale * sum
}

/// `log((1/count) sum w exp(-d_ij))`, or `None` when every weight is zero.
///
/// Evaluated with the smallest weighted distance factored out so that large
/// distances do not underflow to `log(0)`.
fn uniformity_term(d: &Array2<f64>, pairs: &[Pair], count: f64, grad: &mut Array2<f64>) -> Option<f64> {
    let shift = pairs
        .iter()
        .filter(|p| p.2 > 0.0)
        .map(|&(i, j, _)| d[(i, j)])
        .reduce(f64::min)?;
    let sum: f64 = pairs
        .iter()
        .filter(|p| p.2 > 0.0)
        .map(|&(i, j, w)| w * (shift - d[(i, j)]).exp())
        .sum();
    for &(i, j, w) in pairs.iter().filter(|p| p.2 > 0.0) {
        grad[(i, j)] -= w * (shift - d[(i, j)]).exp() / sum;
    }
    Some(-shift + sum.ln() - count.ln())
}

/// Loss selector shared by evaluation, analytic gradients and finite differences.
#[derive(Debug, Clone, Copy)]
pub enum Objective<'a> {
    Global,
    Conditional(&'a KernelMatrix),
    Decoupled {
        partition: &'a BatchPartition,
        kernel: &'a KernelMatrix,
        global_uniformity: bool,
    },
}

impl Objective<'_> {
    pub fn kind(&self) -> ObjectiveKind {
        match self {
            Objective::Global => ObjectiveKind::Global,
            Objective::Conditional(_) => ObjectiveKind::Conditional,
            Objective::Decoupled { .. } => ObjectiveKind::Decoupled,
        }
    }

    fn check(&self, n: usize) -> Result<()> {
        match self {
            Objective::Global => Ok(()),
            Objective::Conditional(kernel) => {
                if kernel.len() != n {
                    return Err(Error::Shape(format!("kernel is {0}x{0}, batch has {n} rows", kernel.len())));
                }
                Ok(())
            }
            Objective::Decoupled { partition, kernel, .. } => {
                if partition.len() != n {
                    return Err(Error::Shape(format!(
                        "partition covers {} rows, batch has {n}",
                        partition.len()
                    )));
                }
                if kernel.len() != partition.labeled().len() {
                    return Err(Error::Shape(format!(
                        "kernel is {0}x{0}, labeled subset has {1} rows",
                        kernel.len(),
                        partition.labeled().len()
                    )));
                }
                Ok(())
            }
        }
    }

    /// Evaluates the objective on a precomputed distance matrix.
    pub fn evaluate_distances(&self, d: &Array2<f64>) -> Result<(LossBreakdown, DistanceGradients)> {
        let n = d.nrows();
        self.check(n)?;
        let mut out = LossBreakdown::new(self.kind());
        let mut grads = DistanceGradients::zeros(n);
        match *self {
            Objective::Global => {
                let nf = n as f64;
                let diag: Vec<Pair> = (0..n).map(|i| (i, i, 1.0)).collect();
                let all: Vec<Pair> = (0..n)
                    .flat_map(|i| (0..n).map(move |j| (i, j, 1.0)))
                    .collect();
                out.align_unlabeled = Term::present(alignment_term(d, &diag, 1.0 / nf, &mut grads.align_unlabeled));
                let unif = uniformity_term(d, &all, nf * nf, &mut grads.unif_unlabeled)
                    .expect("self pairs carry unit weight");
                out.unif_unlabeled = Term::present(unif);
            }
            Objective::Conditional(kernel) => {
                let nf = n as f64;
                let sup = 1.0;
                let align: Vec<Pair> = (0..n)
                    .flat_map(|i| (0..n).map(move |j| (i, j, kernel.get(i, j))))
                    .collect();
                let repel: Vec<Pair> = (0..n)
                    .flat_map(|i| (0..n).map(move |j| (i, j, sup - kernel.get(i, j))))
                    .collect();
                out.labeled_alignment_scale = 1.0 / nf;
                out.align_labeled = Term::present(alignment_term(d, &align, 1.0 / nf, &mut grads.align_labeled));
                let unif = uniformity_term(d, &repel, nf * nf, &mut grads.unif_labeled)
                    .ok_or(Error::DegenerateUniformity)?;
                out.unif_labeled = Term::present(unif);
            }
            Objective::Decoupled {
                partition,
                kernel,
                global_uniformity,
            } => {
                let a = partition.labeled();
                if !a.is_empty() {
                    let na = a.len() as f64;
                    let align: Vec<Pair> = (0..a.len())
                        .flat_map(|p| (0..a.len()).map(move |q| (a[p], a[q], kernel.get(q, p))))
                        .collect();
                    let repel: Vec<Pair> = (0..a.len())
                        .flat_map(|p| {
                            (0..a.len()).map(move |q| {
                                let w = if global_uniformity {
                                    if p == q { 0.0 } else { 1.0 }
                                } else {
                                    1.0 - kernel.get(p, q)
                                };
                                (a[p], a[q], w)
                            })
                        })
                        .collect();
                    out.labeled_alignment_scale = 1.0 / na;
                    out.align_labeled = Term::present(alignment_term(d, &align, 1.0 / na, &mut grads.align_labeled));
                    match uniformity_term(d, &repel, na * na, &mut grads.unif_labeled) {
                        Some(v) => out.unif_labeled = Term::present(v),
                        None => out.labeled_uniformity_degenerate = true,
                    }
                }
                let u = partition.unlabeled();
                if !u.is_empty() {
                    let nu = u.len() as f64;
                    let diag: Vec<Pair> = u.iter().map(|&i| (i, i, 1.0)).collect();
                    let off: Vec<Pair> = u
                        .iter()
                        .flat_map(|&i| u.iter().filter(move |&&j| j != i).map(move |&j| (i, j, 1.0)))
                        .collect();
                    out.align_unlabeled = Term::present(alignment_term(d, &diag, 1.0 / nu, &mut grads.align_unlabeled));
                    if let Some(v) = uniformity_term(d, &off, nu * nu, &mut grads.unif_unlabeled) {
                        out.unif_unlabeled = Term::present(v);
                    }
                }
            }
        }
        Ok((out.finish(), grads))
    }

    pub fn evaluate(&self, batch: &ViewPairBatch) -> Result<LossBreakdown> {
        Ok(self.evaluate_distances(&pairwise_distances(batch))?.0)
    }

    /// Loss value together with its gradient for both views.
    pub fn gradient(&self, batch: &ViewPairBatch) -> Result<(LossBreakdown, GradientBatch)> {
        let d = pairwise_distances(batch);
        let (loss, grads) = self.evaluate_distances(&d)?;
        let g = grads.total();
        Ok((loss, chain_through_distances(batch, &d, &g)))
    }
}

/// Maps `dL/dd_ij` to `dL/dx1_i` and `dL/dx2_j` through the smoothed norm.
pub fn chain_through_distances(batch: &ViewPairBatch, d: &Array2<f64>, dl_dd: &Array2<f64>) -> GradientBatch {
    let n = batch.len();
    let mut out = GradientBatch::zeros(n, batch.dim());
    for i in 0..n {
        for j in 0..n {
            let g = dl_dd[(i, j)];
            if g == 0.0 {
                continue;
            }
            let coef = g / d[(i, j)];
            for k in 0..batch.dim() {
                let diff = batch.x1[(i, k)] - batch.x2[(j, k)];
                out.g1[(i, k)] += coef * diff;
                out.g2[(j, k)] -= coef * diff;
            }
        }
    }
    out
}

/// Alignment/uniformity loss without metadata.
pub fn loss_nce(batch: &ViewPairBatch) -> LossBreakdown {
    Objective::Global
        .evaluate(batch)
        .expect("global objective has no failure modes")
}

/// Kernel-conditioned loss over the whole batch.
pub fn loss_conditional(batch: &ViewPairBatch, kernel: &KernelMatrix) -> Result<LossBreakdown> {
    Objective::Conditional(kernel).evaluate(batch)
}

/// Conditional loss on labeled rows plus metadata-free loss on unlabeled rows.
///
/// With `global_uniformity` set, labeled rows repel each other uniformly
/// (alignment stays conditioned).
pub fn loss_decoupled(
    batch: &ViewPairBatch,
    partition: &BatchPartition,
    kernel: &KernelMatrix,
    global_uniformity: bool,
) -> Result<LossBreakdown> {
    Objective::Decoupled {
        partition,
        kernel,
        global_uniformity,
    }
    .evaluate(batch)
}

pub fn loss_gradient(objective: &Objective<'_>, batch: &ViewPairBatch) -> Result<GradientBatch> {
    Ok(objective.gradient(batch)?.1)
}

/// Central-difference gradient of an arbitrary scalar function of a batch.
pub fn central_difference<F>(batch: &ViewPairBatch, h: f64, mut f: F) -> Result<GradientBatch>
where
    F: FnMut(&ViewPairBatch) -> Result<f64>,
{
    if h.is_nan() || h <= 0.0 {
        return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
    }
    let mut out = GradientBatch::zeros(batch.len(), batch.dim());
    for view in [View::First, View::Second] {
        for i in 0..batch.len() {
            for k in 0..batch.dim() {
                let plus = f(&batch.perturbed(view, i, k, h))?;
                let minus = f(&batch.perturbed(view, i, k, -h))?;
                let g = (plus - minus) / (2.0 * h);
                match view {
                    View::First => out.g1[(i, k)] = g,
                    View::Second => out.g2[(i, k)] = g,
                }
            }
        }
    }
    Ok(out)
}

pub fn finite_diff_gradient(objective: &Objective<'_>, batch: &ViewPairBatch, h: f64) -> Result<GradientBatch> {
    central_difference(batch, h, |b| Ok(objective.evaluate(b)?.total))
}

/// Magnitude below which gradient coordinates are compared absolutely.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// `max |a - b| / max(|a|, |b|, floor)` over all coordinates.
pub fn max_relative_error(a: &GradientBatch, b: &GradientBatch) -> f64 {
    a.g1.iter()
        .zip(b.g1.iter())
        .chain(a.g2.iter().zip(b.g2.iter()))
        .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(RELATIVE_ERROR_FLOOR))
        .fold(0.0, f64::max)
}
