//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};

use confcl::contrastive_loss::ViewPairBatch;
use confcl::detection_metrics::{BinaryMask, Dims};
use confcl::metadata_kernel::{AnnotationSource, AnnotationVector, ConfidenceModel, MetadataSummary};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_batch(rng: &mut ChaCha8Rng, n: usize, d: usize) -> ViewPairBatch {
    let x1 = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
    let x2 = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
    ViewPairBatch::new(x1, x2).unwrap()
}

/// Summary of a random vote vector with `min..=max` votes.
pub fn random_summary(rng: &mut ChaCha8Rng, id: usize, min: usize, max: usize, odd_only: bool) -> MetadataSummary {
    let mut n = rng.random_range(min..=max);
    if odd_only && n % 2 == 0 {
        n += 1;
    }
    let votes: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
    ConfidenceModel::default().summarize(&AnnotationVector::from_values(id.to_string(), AnnotationSource::Pirads, &votes))
}

/// Double-loop smoothed Euclidean distances.
pub fn distances(x1: &Array2<f64>, x2: &Array2<f64>) -> Array2<f64> {
    let n = x1.nrows();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..x1.ncols() {
                s += (x1[[i, k]] - x2[[j, k]]).powi(2);
            }
            d[[i, j]] = (s + 1e-16).sqrt();
        }
    }
    d
}

/// Central differences over every coordinate of both views.
pub fn numeric_gradient(
    batch: &ViewPairBatch,
    h: f64,
    f: impl Fn(&ViewPairBatch) -> f64,
) -> (Array2<f64>, Array2<f64>) {
    let (x1, x2) = (batch.x1().clone(), batch.x2().clone());
    let mut g = [Array2::zeros(x1.dim()), Array2::zeros(x2.dim())];
    for (view, gv) in g.iter_mut().enumerate() {
        for idx in ndarray::indices(x1.dim()) {
            let eval = |delta: f64| {
                let (mut a, mut b) = (x1.clone(), x2.clone());
                if view == 0 {
                    a[idx] += delta;
                } else {
                    b[idx] += delta;
                }
                f(&ViewPairBatch::new(a, b).unwrap())
            };
            gv[idx] = (eval(h) - eval(-h)) / (2.0 * h);
        }
    }
    let [g1, g2] = g;
    (g1, g2)
}

/// Largest `|a - b| / max(|a|, |b|, floor)` over matching entries.
pub fn relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Metadata-free alignment plus off-diagonal uniformity, evaluated term by term.
pub fn unlabeled_loss(x1: &Array2<f64>, x2: &Array2<f64>) -> f64 {
    let d = distances(x1, x2);
    let n = d.nrows() as f64;
    let align: f64 = (0..d.nrows()).map(|i| d[[i, i]]).sum::<f64>() / n;
    if d.nrows() < 2 {
        return align;
    }
    let mut s = 0.0;
    for i in 0..d.nrows() {
        for j in 0..d.nrows() {
            if i != j {
                s += (-d[[i, j]]).exp();
            }
        }
    }
    align + (s / (n * n)).ln()
}

/// Components by breadth-first flood fill from every unvisited foreground voxel.
pub fn flood_fill(mask: &BinaryMask, connectivity: usize) -> Vec<BTreeSet<usize>> {
    let dims = mask.dims();
    let mut offsets = Vec::new();
    for dz in -1i64..=1 {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let manhattan = dx.abs() + dy.abs() + dz.abs();
                let keep = match connectivity {
                    6 => manhattan == 1,
                    18 => manhattan == 1 || manhattan == 2,
                    26 => manhattan >= 1,
                    _ => unreachable!(),
                };
                if keep {
                    offsets.push((dx, dy, dz));
                }
            }
        }
    }
    let at = |x: i64, y: i64, z: i64| -> Option<usize> {
        if x < 0 || y < 0 || z < 0 || x >= dims.x as i64 || y >= dims.y as i64 || z >= dims.z as i64 {
            None
        } else {
            Some((z as usize * dims.y + y as usize) * dims.x + x as usize)
        }
    };
    let mut seen = vec![false; dims.len()];
    let mut out = Vec::new();
    for z in 0..dims.z {
        for y in 0..dims.y {
            for x in 0..dims.x {
                let start = at(x as i64, y as i64, z as i64).unwrap();
                if !mask.get(start) || seen[start] {
                    continue;
                }
                let mut comp = BTreeSet::new();
                let mut queue = VecDeque::from([(x as i64, y as i64, z as i64)]);
                seen[start] = true;
                while let Some((cx, cy, cz)) = queue.pop_front() {
                    comp.insert(at(cx, cy, cz).unwrap());
                    for &(dx, dy, dz) in &offsets {
                        if let Some(n) = at(cx + dx, cy + dy, cz + dz) {
                            if mask.get(n) && !seen[n] {
                                seen[n] = true;
                                queue.push_back((cx + dx, cy + dy, cz + dz));
                            }
                        }
                    }
                }
                out.push(comp);
            }
        }
    }
    out
}

pub fn random_mask(rng: &mut ChaCha8Rng, max: (usize, usize, usize)) -> BinaryMask {
    let dims = Dims::new(rng.random_range(1..=max.0), rng.random_range(1..=max.1), rng.random_range(1..=max.2)).unwrap();
    let density = rng.random_range(0.05..0.6);
    BinaryMask::new(dims, (0..dims.len()).map(|_| rng.random_bool(density)).collect()).unwrap()
}

/// AUC by comparing every positive with every negative.
pub fn pair_counting_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut twice_wins = 0u64;
    let (mut p, mut n) = (0u64, 0u64);
    for (i, &li) in labels.iter().enumerate() {
        if li {
            p += 1;
        } else {
            n += 1;
        }
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            if scores[i] > scores[j] {
                twice_wins += 2;
            } else if scores[i] == scores[j] {
                twice_wins += 1;
            }
        }
    }
    twice_wins as f64 / (2 * p * n) as f64
}

/// AP from an explicit precision-recall curve: one operating point per
/// distinct score, recall over `n_references`.
pub fn pr_curve_ap(items: &[(f64, bool)], n_references: usize) -> f64 {
    let mut thresholds: Vec<f64> = items.iter().map(|x| x.0).collect();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for t in thresholds {
        let selected: Vec<&(f64, bool)> = items.iter().filter(|x| x.0 >= t).collect();
        let tp = selected.iter().filter(|x| x.1).count();
        let precision = tp as f64 / selected.len() as f64;
        let recall = tp as f64 / n_references as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    ap
}
