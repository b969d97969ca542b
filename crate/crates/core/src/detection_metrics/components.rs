//! 3D connected-component labeling by union-find over backward neighbors.

use serde::{Deserialize, Serialize};

use super::volume::{BinaryMask, Dims};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Connectivity {
    /// Face neighbors.
    #[serde(rename = "6")]
    Six,
    /// Face and edge neighbors.
    #[serde(rename = "18")]
    Eighteen,
    /// Face, edge and corner neighbors.
    #[default]
    #[serde(rename = "26")]
    TwentySix,
}

impl Connectivity {
    pub fn count(self) -> usize {
        match self {
            Connectivity::Six => 6,
            Connectivity::Eighteen => 18,
            Connectivity::TwentySix => 26,
        }
    }

    /// Whether the offset `(dx, dy, dz)` (each in -1..=1, not all zero) is a neighbor.
    pub fn includes(self, dx: i64, dy: i64, dz: i64) -> bool {
        let manhattan = dx.abs() + dy.abs() + dz.abs();
        match self {
            Connectivity::Six => manhattan == 1,
            Connectivity::Eighteen => (1..=2).contains(&manhattan),
            Connectivity::TwentySix => (1..=3).contains(&manhattan),
        }
    }

    pub fn offsets(self) -> Vec<(i64, i64, i64)> {
        let mut out = Vec::with_capacity(self.count());
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    if self.includes(dx, dy, dz) {
                        out.push((dx, dy, dz));
                    }
                }
            }
        }
        out
    }
}

impl std::str::FromStr for Connectivity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "6" => Ok(Connectivity::Six),
            "18" => Ok(Connectivity::Eighteen),
            "26" => Ok(Connectivity::TwentySix),
            other => Err(Error::InvalidArgument(format!(
                "connectivity must be 6, 18 or 26, got {other:?}"
            ))),
        }
    }
}

/// A set of voxels on a grid, stored as sorted linear indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Region {
    dims: Dims,
    voxels: Vec<usize>,
}

impl Region {
    pub fn new(dims: Dims, mut voxels: Vec<usize>) -> Result<Self> {
        voxels.sort_unstable();
        voxels.dedup();
        if let Some(&last) = voxels.last() {
            if last >= dims.len() {
                return Err(Error::Shape(format!("voxel index {last} outside grid of {}", dims.len())));
            }
        }
        Ok(Self { dims, voxels })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn voxels(&self) -> &[usize] {
        &self.voxels
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn intersection_len(&self, other: &Region) -> usize {
        let (mut a, mut b, mut n) = (0, 0, 0);
        while a < self.voxels.len() && b < other.voxels.len() {
            match self.voxels[a].cmp(&other.voxels[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    a += 1;
                    b += 1;
                }
            }
        }
        n
    }

    /// Intersection over union; two empty regions have IoU 0.
    pub fn iou(&self, other: &Region) -> Result<f64> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", self.dims, other.dims)));
        }
        let inter = self.intersection_len(other);
        let union = self.len() + other.len() - inter;
        Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
    }

    pub fn to_mask(&self) -> BinaryMask {
        let mut m = BinaryMask::empty(self.dims);
        for &v in &self.voxels {
            m.set(v, true);
        }
        m
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn union(parent: &mut [usize], a: usize, b: usize) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        // keep the smaller index as root so roots are first-seen voxels
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi] = lo;
    }
}

/// Maximal connected foreground sets, ordered by their first voxel in
/// (z, y, x) order.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> Vec<Region> {
    let dims = mask.dims();
    let backward: Vec<_> = connectivity
        .offsets()
        .into_iter()
        .filter(|&(dx, dy, dz)| (dz, dy, dx) < (0, 0, 0))
        .collect();
    let mut parent: Vec<usize> = (0..dims.len()).collect();
    for z in 0..dims.z {
        for y in 0..dims.y {
            for x in 0..dims.x {
                let idx = dims.index(x, y, z);
                if !mask.get(idx) {
                    continue;
                }
                for &(dx, dy, dz) in &backward {
                    let (nx, ny, nz) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
                    if nx < 0 || ny < 0 || nz < 0 || nx >= dims.x as i64 || ny >= dims.y as i64 {
                        continue;
                    }
                    let nidx = dims.index(nx as usize, ny as usize, nz as usize);
                    if mask.get(nidx) {
                        union(&mut parent, idx, nidx);
                    }
                }
            }
        }
    }

    let mut slot_of_root = vec![usize::MAX; dims.len()];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for idx in 0..dims.len() {
        if !mask.get(idx) {
            continue;
        }
        let root = find(&mut parent, idx);
        if slot_of_root[root] == usize::MAX {
            slot_of_root[root] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot_of_root[root]].push(idx);
    }
    groups
        .into_iter()
        .map(|voxels| Region { dims, voxels })
        .collect()
}
