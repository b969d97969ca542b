//! Confidence-weighted conditional contrastive learning.
//!
//! - [`metadata_kernel`]: binarized multi-annotator metadata, majority-vote
//!   confidence and the pairwise similarity kernel (with ablation variants).
//! - [`contrastive_loss`]: global, conditional and decoupled
//!   alignment/uniformity objectives with analytic gradients.
//! - [`detection_metrics`]: thresholding, 3D connected components, lesion
//!   matching, exam/lesion-level ROC AUC and average precision.
//! - [`synth_bench`]: a synthetic multi-annotator benchmark that trains a
//!   small encoder under each loss variant and compares linear-probe quality.
//! - [`io`]: the on-disk formats (metadata CSV, `EMB1`, `VOL1`, `MSK1`).

pub mod contrastive_loss;
pub mod detection_metrics;
pub mod error;
pub mod io;
pub mod metadata_kernel;
pub mod synth_bench;

pub use error::{Error, Result};

/// Formats a float with 17 significant digits so it round-trips exactly.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}
