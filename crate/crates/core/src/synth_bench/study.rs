use std::fmt::Write as _;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{augment, generate_dataset, SynthExam};
use super::encoder::Encoder;
use super::probe::{linear_probe, ProbeResult};
use super::train::{train_on, TermMeans, INIT_STREAM, TRAIN_STREAM};
use super::{StudyVariant, SynthConfig};
use crate::error::{Error, Result};
use crate::format_f64;

const DATA_STREAM: u64 = 0xda7a;
const EVAL_STREAM: u64 = 0xe7a1;
const PROBE_STREAM: u64 = 0x9b0e;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Order-sensitive hash of a tuple of integers, used to derive independent RNG streams.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5eed, |h, &p| splitmix64(h ^ splitmix64(p)))
}

/// Alignment and uniformity statistics of two embedding views.
///
/// Alignment is the mean of `|z1_i - z2_i|`; uniformity is
/// `log mean_{i != j} exp(-|z1_i - z1_j|)`.
pub fn embedding_statistics(z1: &Array2<f64>, z2: &Array2<f64>) -> Result<(f64, f64)> {
    if z1.dim() != z2.dim() {
        return Err(Error::Shape(format!("views have shapes {:?} and {:?}", z1.dim(), z2.dim())));
    }
    let n = z1.nrows();
    if n < 2 {
        return Err(Error::InvalidArgument("statistics need at least two embeddings".into()));
    }
    let dist = |a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>| {
        a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    };
    let alignment = z1.rows().into_iter().zip(z2.rows()).map(|(a, b)| dist(a, b)).sum::<f64>() / n as f64;
    let mut pairs = Vec::with_capacity(n * (n - 1));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                pairs.push(dist(z1.row(i), z1.row(j)));
            }
        }
    }
    let min = pairs.iter().copied().fold(f64::INFINITY, f64::min);
    let sum: f64 = pairs.iter().map(|&d| (min - d).exp()).sum();
    let uniformity = -min + sum.ln() - (pairs.len() as f64).ln();
    Ok((alignment, uniformity))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub probe_accuracy: f64,
    pub probe_auc: f64,
    pub alignment: f64,
    pub uniformity: f64,
    pub final_loss: f64,
    pub loss_curve: Vec<f64>,
    pub final_terms: TermMeans,
}

/// One (variant, seed) run. Exactly one of `metrics` and `error` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub variant: StudyVariant,
    pub seed: u64,
    pub metrics: Option<CellMetrics>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, std })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: StudyVariant,
    pub n_ok: usize,
    pub n_failed: usize,
    pub probe_accuracy: Option<MeanStd>,
    pub probe_auc: Option<MeanStd>,
    pub alignment: Option<MeanStd>,
    pub uniformity: Option<MeanStd>,
    pub final_loss: Option<MeanStd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub config: SynthConfig,
    pub seeds: Vec<u64>,
    pub cells: Vec<CellRecord>,
    pub summary: Vec<VariantSummary>,
}

fn opt(x: Option<f64>) -> String {
    x.map(format_f64).unwrap_or_default()
}

impl StudyReport {
    pub fn summary_for(&self, variant: StudyVariant) -> Option<&VariantSummary> {
        self.summary.iter().find(|s| s.variant == variant)
    }

    /// One line per cell: `variant,seed,probe_acc,probe_auc,align,unif,final_loss`.
    pub fn cells_csv(&self) -> String {
        let mut out = String::from("variant,seed,probe_acc,probe_auc,align,unif,final_loss,error\n");
        for c in &self.cells {
            let m = c.metrics.as_ref();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                c.variant,
                c.seed,
                opt(m.map(|m| m.probe_accuracy)),
                opt(m.map(|m| m.probe_auc)),
                opt(m.map(|m| m.alignment)),
                opt(m.map(|m| m.uniformity)),
                opt(m.map(|m| m.final_loss)),
                c.error.as_deref().unwrap_or("").replace([',', '\n'], ";"),
            );
        }
        out
    }

    /// One row per variant with mean and standard deviation columns.
    pub fn summary_csv(&self) -> String {
        let metrics = ["probe_acc", "probe_auc", "align", "unif", "final_loss"];
        let mut out = String::from("variant,n_ok,n_failed");
        for m in metrics {
            let _ = write!(out, ",{m}_mean,{m}_std");
        }
        out.push('\n');
        for s in &self.summary {
            let _ = write!(out, "{},{},{}", s.variant, s.n_ok, s.n_failed);
            for v in [s.probe_accuracy, s.probe_auc, s.alignment, s.uniformity, s.final_loss] {
                let _ = write!(out, ",{},{}", opt(v.map(|v| v.mean)), opt(v.map(|v| v.std)));
            }
            out.push('\n');
        }
        out
    }

    /// Human-readable table of `mean +- std` per variant.
    pub fn table(&self) -> String {
        let fmt = |v: Option<MeanStd>| v.map_or_else(|| "n/a".to_string(), |v| format!("{:.4} +- {:.4}", v.mean, v.std));
        let mut out = format!(
            "{:<13} {:>4} {:>20} {:>20} {:>20} {:>20}\n",
            "variant", "runs", "probe_auc", "probe_acc", "align", "unif"
        );
        for s in &self.summary {
            let _ = writeln!(
                out,
                "{:<13} {:>4} {:>20} {:>20} {:>20} {:>20}",
                s.variant.name(),
                s.n_ok,
                fmt(s.probe_auc),
                fmt(s.probe_accuracy),
                fmt(s.alignment),
                fmt(s.uniformity)
            );
        }
        out
    }
}

struct SeedContext {
    seed: u64,
    exams: Vec<SynthExam>,
    init_seed: u64,
    probe_seed: u64,
    eval_seed: u64,
}

fn run_cell(config: &SynthConfig, ctx: &SeedContext, variant: StudyVariant) -> Result<CellMetrics> {
    let cell_config = SynthConfig { variant, ..config.clone() };
    let stream = derive_seed(&[config.seed, TRAIN_STREAM, variant.index(), ctx.seed]);
    let outcome = train_on(&cell_config, &ctx.exams, ctx.init_seed, stream)?;
    let encoder: &Encoder = &outcome.encoder;

    let n = ctx.exams.len();
    let dim = config.input_dim;
    let clean = Array2::from_shape_fn((n, dim), |(i, k)| ctx.exams[i].features[k]);
    let labels: Vec<bool> = ctx.exams.iter().map(|e| e.true_label).collect();
    let ProbeResult { accuracy, auc, .. } = linear_probe(&encoder.forward(&clean), &labels, ctx.probe_seed)?;

    let mut rng = ChaCha8Rng::seed_from_u64(ctx.eval_seed);
    let mut view = || {
        let mut x = Array2::zeros((n, dim));
        for (i, e) in ctx.exams.iter().enumerate() {
            x.row_mut(i).assign(&augment(&e.features, config.aug_sigma, &mut rng));
        }
        encoder.forward(&x)
    };
    let (z1, z2) = (view(), view());
    let (alignment, uniformity) = embedding_statistics(&z1, &z2)?;

    Ok(CellMetrics {
        probe_accuracy: accuracy,
        probe_auc: auc,
        alignment,
        uniformity,
        final_loss: outcome.loss_curve.last().copied().unwrap_or(f64::NAN),
        loss_curve: outcome.loss_curve,
        final_terms: outcome.final_terms,
    })
}

fn summarize(variant: StudyVariant, cells: &[CellRecord]) -> VariantSummary {
    let ok: Vec<&CellMetrics> = cells
        .iter()
        .filter(|c| c.variant == variant)
        .filter_map(|c| c.metrics.as_ref())
        .collect();
    let n_total = cells.iter().filter(|c| c.variant == variant).count();
    let stat = |f: fn(&CellMetrics) -> f64| MeanStd::of(&ok.iter().map(|m| f(m)).collect::<Vec<_>>());
    VariantSummary {
        variant,
        n_ok: ok.len(),
        n_failed: n_total - ok.len(),
        probe_accuracy: stat(|m| m.probe_accuracy),
        probe_auc: stat(|m| m.probe_auc),
        alignment: stat(|m| m.alignment),
        uniformity: stat(|m| m.uniformity),
        final_loss: stat(|m| m.final_loss),
    }
}

/// Trains every (variant, seed) cell and aggregates per variant.
///
/// For a given seed all variants share the dataset, the initial weights,
/// the probe split and the evaluation noise; only the batch order and
/// augmentation stream depend on the variant. Cells run in parallel on
/// `threads` workers (all cores when `None`) and results do not depend on
/// the thread count. A failing cell is recorded rather than aborting the study.
pub fn run_study(
    config: &SynthConfig,
    variants: &[StudyVariant],
    seeds: &[u64],
    threads: Option<usize>,
) -> Result<StudyReport> {
    config.validate()?;
    if variants.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidArgument("study needs at least one variant and one seed".into()));
    }
    let contexts = seeds
        .iter()
        .map(|&seed| {
            Ok(SeedContext {
                seed,
                exams: generate_dataset(config, derive_seed(&[config.seed, DATA_STREAM, seed]))?,
                init_seed: derive_seed(&[config.seed, INIT_STREAM, seed]),
                probe_seed: derive_seed(&[config.seed, PROBE_STREAM, seed]),
                eval_seed: derive_seed(&[config.seed, EVAL_STREAM, seed]),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(StudyVariant, &SeedContext)> = variants
        .iter()
        .flat_map(|&v| contexts.iter().map(move |ctx| (v, ctx)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let cells: Vec<CellRecord> = pool.install(|| {
        jobs.par_iter()
            .map(|&(variant, ctx)| {
                let result = run_cell(config, ctx, variant);
                CellRecord {
                    variant,
                    seed: ctx.seed,
                    error: result.as_ref().err().map(ToString::to_string),
                    metrics: result.ok(),
                }
            })
            .collect()
    });

    let mut unique: Vec<StudyVariant> = Vec::new();
    for &v in variants {
        if !unique.contains(&v) {
            unique.push(v);
        }
    }
    let summary = unique.iter().map(|&v| summarize(v, &cells)).collect();
    Ok(StudyReport {
        config: config.clone(),
        seeds: seeds.to_vec(),
        cells,
        summary,
    })
}
