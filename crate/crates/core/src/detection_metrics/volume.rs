use serde::{Deserialize, Serialize};

use super::components::{connected_components, Connectivity};
use crate::error::{Error, Result};

/// Grid extent `(X, Y, Z)`; voxels are stored x-fastest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

impl Dims {
    pub fn new(x: usize, y: usize, z: usize) -> Result<Self> {
        if x == 0 || y == 0 || z == 0 {
            return Err(Error::Shape(format!("volume dims must be positive, got {x}x{y}x{z}")));
        }
        Ok(Self { x, y, z })
    }

    pub fn len(&self) -> usize {
        self.x * self.y * self.z
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.x * (y + self.y * z)
    }

    pub fn coords(&self, index: usize) -> (usize, usize, usize) {
        (index % self.x, (index / self.x) % self.y, index / (self.x * self.y))
    }
}

/// Per-voxel lesion probability map.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVolume {
    dims: Dims,
    voxels: Vec<f32>,
}

impl ProbVolume {
    pub fn new(dims: Dims, voxels: Vec<f32>) -> Result<Self> {
        if voxels.len() != dims.len() {
            return Err(Error::Shape(format!(
                "{} voxels for dims {}x{}x{}",
                voxels.len(),
                dims.x,
                dims.y,
                dims.z
            )));
        }
        if let Some(pos) = voxels.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument(format!(
                "voxel {pos} has probability {} outside [0,1]",
                voxels[pos]
            )));
        }
        Ok(Self { dims, voxels })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn voxels(&self) -> &[f32] {
        &self.voxels
    }

    pub fn get(&self, index: usize) -> f32 {
        self.voxels[index]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    dims: Dims,
    voxels: Vec<bool>,
}

impl BinaryMask {
    pub fn new(dims: Dims, voxels: Vec<bool>) -> Result<Self> {
        if voxels.len() != dims.len() {
            return Err(Error::Shape(format!(
                "{} voxels for dims {}x{}x{}",
                voxels.len(),
                dims.x,
                dims.y,
                dims.z
            )));
        }
        Ok(Self { dims, voxels })
    }

    pub fn empty(dims: Dims) -> Self {
        Self {
            dims,
            voxels: vec![false; dims.len()],
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn voxels(&self) -> &[bool] {
        &self.voxels
    }

    pub fn get(&self, index: usize) -> bool {
        self.voxels[index]
    }

    pub fn set(&mut self, index: usize, value: bool) {
        self.voxels[index] = value;
    }

    pub fn count(&self) -> usize {
        self.voxels.iter().filter(|&&v| v).count()
    }
}

/// Foreground where probability is strictly above `t`.
///
/// The comparison happens at the volume's single precision, so a voxel
/// stored as `0.6` is not above a threshold of `0.6`.
pub fn threshold_volume(v: &ProbVolume, t: f64) -> BinaryMask {
    let t = t as f32;
    BinaryMask {
        dims: v.dims,
        voxels: v.voxels.iter().map(|&p| p > t).collect(),
    }
}

/// Parameters of the descending-threshold candidate search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicThreshold {
    pub t_start: f64,
    pub t_min: f64,
    pub step: f64,
    pub max_candidates: usize,
    pub min_voxels: usize,
    pub connectivity: Connectivity,
}

impl Default for DynamicThreshold {
    fn default() -> Self {
        Self {
            t_start: 0.6,
            t_min: 0.1,
            step: 0.05,
            max_candidates: 5,
            min_voxels: 10,
            connectivity: Connectivity::default(),
        }
    }
}

impl DynamicThreshold {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.t_min && self.t_min <= self.t_start && self.t_start <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "need 0 <= t_min <= t_start <= 1, got t_min={} t_start={}",
                self.t_min, self.t_start
            )));
        }
        if self.step.is_nan() || self.step <= 0.0 {
            return Err(Error::InvalidArgument(format!("step must be positive, got {}", self.step)));
        }
        Ok(())
    }
}

/// Lowers the threshold from `t_start` in steps of `step` until at least
/// `max_candidates` components of `min_voxels` or more appear, or `t_min`
/// is reached. Returns the mask at the final threshold.
pub fn dynamic_threshold(v: &ProbVolume, params: &DynamicThreshold) -> Result<(BinaryMask, f64)> {
    params.validate()?;
    let mut k = 0u32;
    loop {
        // computed from the step count rather than accumulated
        let t = (params.t_start - f64::from(k) * params.step).max(params.t_min);
        let mask = threshold_volume(v, t);
        let candidates = connected_components(&mask, params.connectivity)
            .iter()
            .filter(|c| c.len() >= params.min_voxels)
            .count();
        if candidates >= params.max_candidates || t <= params.t_min {
            return Ok((mask, t));
        }
        k += 1;
    }
}
