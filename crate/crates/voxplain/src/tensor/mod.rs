//! Dense 3D grid storage, region masking, resampling and normalization.
//!
//! All grids use x-fastest (Fortran-style) linearization:
//! `index = x + dx * (y + dy * z)`. That order is fixed so raw file blobs
//! are bit-exact across platforms.

mod resample;

pub use resample::trilinear_upsample;

use crate::error::{Error, Result};

pub type Dims = (usize, usize, usize);

#[inline]
pub fn voxel_count(dims: Dims) -> usize {
    dims.0 * dims.1 * dims.2
}

#[inline]
pub fn linear_index(dims: Dims, x: usize, y: usize, z: usize) -> usize {
    x + dims.0 * (y + dims.1 * z)
}

/// Dense 3D scalar grid, the shared storage of volumes and heatmaps.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid3 {
    pub dims: Dims,
    pub data: Vec<f32>,
}

impl Grid3 {
    pub fn new(dims: Dims, data: Vec<f32>) -> Result<Self> {
        if data.len() != voxel_count(dims) {
            return Err(Error::InvalidArgument(format!(
                "grid data length {} does not match dims {:?}",
                data.len(),
                dims
            )));
        }
        Ok(Grid3 { dims, data })
    }

    pub fn filled(dims: Dims, value: f32) -> Self {
        Grid3 {
            dims,
            data: vec![value; voxel_count(dims)],
        }
    }

    pub fn zeros(dims: Dims) -> Self {
        Self::filled(dims, 0.0)
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[linear_index(self.dims, x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: f32) {
        let i = linear_index(self.dims, x, y, z);
        self.data[i] = v;
    }

    pub fn min_max(&self) -> (f32, f32) {
        let mut lo = f32::INFINITY;
        let mut hi = f32::NEG_INFINITY;
        for &v in &self.data {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// A 3D scalar intensity volume with optional physical voxel spacing (mm).
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub grid: Grid3,
    pub spacing: [f32; 3],
}

impl Volume {
    pub fn new(dims: Dims, data: Vec<f32>) -> Result<Self> {
        let grid = Grid3::new(dims, data)?;
        if !grid.all_finite() {
            return Err(Error::InvalidArgument(
                "volume contains non-finite values".into(),
            ));
        }
        Ok(Volume {
            grid,
            spacing: [1.0; 3],
        })
    }

    pub fn from_grid(grid: Grid3) -> Self {
        Volume {
            grid,
            spacing: [1.0; 3],
        }
    }

    pub fn dims(&self) -> Dims {
        self.grid.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.grid.data
    }
}

/// Non-negative per-voxel importance scores aligned to an explained volume.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub grid: Grid3,
}

impl Heatmap {
    pub fn new(grid: Grid3) -> Result<Self> {
        if !grid.data.iter().all(|v| v.is_finite() && *v >= 0.0) {
            return Err(Error::InvalidArgument(
                "heatmap scores must be finite and non-negative".into(),
            ));
        }
        Ok(Heatmap { grid })
    }

    pub fn zeros(dims: Dims) -> Self {
        Heatmap {
            grid: Grid3::zeros(dims),
        }
    }

    pub fn dims(&self) -> Dims {
        self.grid.dims
    }

    pub fn scores(&self) -> &[f32] {
        &self.grid.data
    }

    /// Voxel coordinates of the maximum score (first in linear order on ties).
    pub fn argmax(&self) -> (usize, usize, usize) {
        let mut best = 0usize;
        for (i, &v) in self.grid.data.iter().enumerate() {
            if v > self.grid.data[best] {
                best = i;
            }
        }
        let (dx, dy) = (self.grid.dims.0, self.grid.dims.1);
        (best % dx, (best / dx) % dy, best / (dx * dy))
    }
}

/// Binary voxel mask (ground-truth regions, lesions).
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub dims: Dims,
    pub data: Vec<u8>,
}

impl Mask {
    pub fn new(dims: Dims, data: Vec<u8>) -> Result<Self> {
        if data.len() != voxel_count(dims) {
            return Err(Error::InvalidArgument(
                "mask data length does not match dims".into(),
            ));
        }
        Ok(Mask { dims, data })
    }

    pub fn zeros(dims: Dims) -> Self {
        Mask {
            dims,
            data: vec![0; voxel_count(dims)],
        }
    }

    pub fn positives(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Voxelwise union of two masks of the same dims.
    pub fn union(&self, other: &Mask) -> Result<Mask> {
        if self.dims != other.dims {
            return Err(Error::DimMismatch {
                expected: self.dims,
                got: other.dims,
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| u8::from(a != 0 || b != 0))
            .collect();
        Ok(Mask {
            dims: self.dims,
            data,
        })
    }
}

/// Integer label grid, one small positive label per voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelGrid {
    pub dims: Dims,
    pub data: Vec<u32>,
}

impl LabelGrid {
    pub fn new(dims: Dims, data: Vec<u32>) -> Result<Self> {
        if data.len() != voxel_count(dims) {
            return Err(Error::InvalidArgument(
                "label data length does not match dims".into(),
            ));
        }
        Ok(LabelGrid { dims, data })
    }
}

/// A set of voxels: either an explicit index list or an axis-aligned cuboid
/// (center plus per-axis half-extent) clipped to the grid bounds.
#[derive(Debug, Clone)]
pub enum VoxelRegion {
    Explicit(Vec<usize>),
    Cuboid {
        center: (usize, usize, usize),
        half_extent: (usize, usize, usize),
    },
}

impl VoxelRegion {
    /// Cube of half-extent `k` on every axis around `center`.
    pub fn cube(center: (usize, usize, usize), k: usize) -> Self {
        VoxelRegion::Cuboid {
            center,
            half_extent: (k, k, k),
        }
    }

    /// Expand to the explicit in-bounds linear index set for `dims`.
    pub fn indices(&self, dims: Dims) -> Vec<usize> {
        match self {
            VoxelRegion::Explicit(ix) => {
                let n = voxel_count(dims);
                ix.iter().copied().filter(|&i| i < n).collect()
            }
            VoxelRegion::Cuboid {
                center,
                half_extent,
            } => {
                let lo = (
                    center.0.saturating_sub(half_extent.0),
                    center.1.saturating_sub(half_extent.1),
                    center.2.saturating_sub(half_extent.2),
                );
                let hi = (
                    (center.0 + half_extent.0).min(dims.0.saturating_sub(1)),
                    (center.1 + half_extent.1).min(dims.1.saturating_sub(1)),
                    (center.2 + half_extent.2).min(dims.2.saturating_sub(1)),
                );
                if center.0 >= dims.0 || center.1 >= dims.1 || center.2 >= dims.2 {
                    return Vec::new();
                }
                let mut out =
                    Vec::with_capacity((hi.0 - lo.0 + 1) * (hi.1 - lo.1 + 1) * (hi.2 - lo.2 + 1));
                for z in lo.2..=hi.2 {
                    for y in lo.1..=hi.1 {
                        for x in lo.0..=hi.0 {
                            out.push(linear_index(dims, x, y, z));
                        }
                    }
                }
                out
            }
        }
    }
}

/// Copy of `v` with every voxel of `r` set to `fill`; the input is untouched.
pub fn occlude(v: &Volume, r: &VoxelRegion, fill: f32) -> Volume {
    let mut out = v.clone();
    for i in r.indices(v.dims()) {
        out.grid.data[i] = fill;
    }
    out
}

/// Rescale scores to [0,1]. A constant map (zero range) collapses to all
/// zeros. Ordering of any voxel pair is preserved or tied, never reversed.
pub fn minmax_normalize(h: &Heatmap) -> Heatmap {
    let (lo, hi) = h.grid.min_max();
    let range = hi - lo;
    let data = if range <= 0.0 || !range.is_finite() {
        vec![0.0; h.grid.data.len()]
    } else {
        h.grid.data.iter().map(|&v| (v - lo) / range).collect()
    };
    Heatmap {
        grid: Grid3 {
            dims: h.grid.dims,
            data,
        },
    }
}

/// Min-max rescale of an arbitrary grid (used for slice export of volumes).
pub fn minmax_normalize_grid(g: &Grid3) -> Grid3 {
    let (lo, hi) = g.min_max();
    let range = hi - lo;
    let data = if range <= 0.0 || !range.is_finite() {
        vec![0.0; g.data.len()]
    } else {
        g.data.iter().map(|&v| (v - lo) / range).collect()
    };
    Grid3 {
        dims: g.dims,
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ramp_volume(dims: Dims) -> Volume {
        let mut data = Vec::with_capacity(voxel_count(dims));
        for z in 0..dims.2 {
            for y in 0..dims.1 {
                for x in 0..dims.0 {
                    data.push((x + 2 * y + 3 * z) as f32);
                }
            }
        }
        Volume::new(dims, data).unwrap()
    }

    #[test]
    fn occlude_empty_region_is_identity() {
        let v = ramp_volume((4, 4, 4));
        let out = occlude(&v, &VoxelRegion::Explicit(vec![]), 0.0);
        assert_eq!(out, v);
    }

    #[test]
    fn occlude_whole_grid_zeroes_everything() {
        let v = ramp_volume((3, 3, 3));
        let r = VoxelRegion::Explicit((0..27).collect());
        let out = occlude(&v, &r, 0.0);
        assert!(out.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn corner_cube_clips_to_64_voxels() {
        // half-extent 3 around a corner of a 10^3 grid keeps 4 voxels per axis
        let dims = (10, 10, 10);
        let r = VoxelRegion::cube((0, 0, 0), 3);
        let got = r.indices(dims);
        // brute-force enumeration oracle
        let mut expect = Vec::new();
        for z in 0..10usize {
            for y in 0..10usize {
                for x in 0..10usize {
                    let inside = (x as i64 - 0).abs() <= 3
                        && (y as i64 - 0).abs() <= 3
                        && (z as i64 - 0).abs() <= 3;
                    if inside {
                        expect.push(linear_index(dims, x, y, z));
                    }
                }
            }
        }
        assert_eq!(got.len(), 64);
        let mut sorted = got.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, expect);
    }

    #[test]
    fn cuboid_matches_explicit_form() {
        let dims = (6, 5, 4);
        let r = VoxelRegion::Cuboid {
            center: (5, 2, 1),
            half_extent: (2, 1, 3),
        };
        let mut ix = r.indices(dims);
        ix.sort_unstable();
        let explicit = VoxelRegion::Explicit(ix.clone());
        let mut ix2 = explicit.indices(dims);
        ix2.sort_unstable();
        assert_eq!(ix, ix2);
    }

    #[test]
    fn occlude_leaves_outside_untouched() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let dims = (
                rng.gen_range(2..6usize),
                rng.gen_range(2..6usize),
                rng.gen_range(2..6usize),
            );
            let data: Vec<f32> = (0..voxel_count(dims)).map(|_| rng.gen()).collect();
            let v = Volume::new(dims, data).unwrap();
            let center = (
                rng.gen_range(0..dims.0),
                rng.gen_range(0..dims.1),
                rng.gen_range(0..dims.2),
            );
            let r = VoxelRegion::cube(center, rng.gen_range(0..3));
            let region: std::collections::HashSet<usize> = r.indices(dims).into_iter().collect();
            let out = occlude(&v, &r, -7.0);
            for i in 0..v.data().len() {
                if region.contains(&i) {
                    assert_eq!(out.data()[i], -7.0);
                } else {
                    assert_eq!(out.data()[i], v.data()[i]);
                }
            }
        }
    }

    #[test]
    fn normalize_basic_and_idempotent() {
        let h = Heatmap::new(Grid3::new((3, 1, 1), vec![0.0, 5.0, 10.0]).unwrap()).unwrap();
        let n = minmax_normalize(&h);
        assert_eq!(n.scores(), &[0.0, 0.5, 1.0]);
        let n2 = minmax_normalize(&n);
        assert_eq!(n2.scores(), n.scores());
    }

    #[test]
    fn normalize_constant_is_zero() {
        let h = Heatmap::new(Grid3::filled((2, 2, 2), 3.5)).unwrap();
        let n = minmax_normalize(&h);
        assert!(n.scores().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normalize_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<f32> = (0..64).map(|_| rng.gen_range(0.0..9.0)).collect();
        let h = Heatmap::new(Grid3::new((4, 4, 4), data.clone()).unwrap()).unwrap();
        let n = minmax_normalize(&h);
        for i in 0..64 {
            for j in 0..64 {
                if data[i] < data[j] {
                    assert!(n.scores()[i] <= n.scores()[j]);
                }
            }
        }
    }

    #[test]
    fn mask_union_is_voxelwise_or() {
        let a = Mask::new((2, 1, 1), vec![1, 0]).unwrap();
        let b = Mask::new((2, 1, 1), vec![0, 1]).unwrap();
        assert_eq!(a.union(&b).unwrap().data, vec![1, 1]);
    }
}
