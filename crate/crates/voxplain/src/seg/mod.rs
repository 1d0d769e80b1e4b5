//! Hierarchical volumetric segmentation.
//!
//! A seeded watershed over the gradient-magnitude field produces a base
//! supervoxel partition; greedy agglomeration on the region-adjacency
//! graph yields a binary merge tree with non-decreasing (ultrametric)
//! merge heights; cutting the tree at quantile heights gives a compact
//! nested hierarchy of at most 20 levels.

mod merge;
mod watershed;

pub use merge::{build_merge_tree, extract_hierarchy, MergeEvent, MergeTree};
pub use watershed::oversegment;

use crate::error::{Error, Result};
use crate::tensor::{Dims, LabelGrid};

pub const MAX_LEVELS: usize = 20;

/// A full partition of the voxel grid into 6-connected regions labeled 1..K.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervoxelLabeling {
    pub labels: LabelGrid,
    pub num_regions: usize,
}

impl SupervoxelLabeling {
    pub fn dims(&self) -> Dims {
        self.labels.dims
    }

    /// Per-region voxel index lists, region `k` at position `k-1`.
    pub fn region_voxels(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_regions];
        for (i, &l) in self.labels.data.iter().enumerate() {
            out[(l - 1) as usize].push(i);
        }
        out
    }

    /// Checks the partition invariant: every voxel labeled in 1..=K and no
    /// label bin empty.
    pub fn validate_partition(&self) -> Result<()> {
        let mut seen = vec![false; self.num_regions];
        for &l in &self.labels.data {
            if l == 0 || l as usize > self.num_regions {
                return Err(Error::InvalidArgument(format!(
                    "label {l} outside 1..={}",
                    self.num_regions
                )));
            }
            seen[(l - 1) as usize] = true;
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidArgument(format!("label {} is empty", k + 1)));
        }
        Ok(())
    }
}

/// Ordered fine-to-coarse nested partitions with their tree-cut heights.
#[derive(Debug, Clone)]
pub struct SegmentationHierarchy {
    pub levels: Vec<SupervoxelLabeling>,
    pub cut_heights: Vec<f32>,
}

impl SegmentationHierarchy {
    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn dims(&self) -> Dims {
        self.levels[0].dims()
    }

    /// Per-level segment counts K_n.
    pub fn segment_counts(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.num_regions).collect()
    }

    /// Build a single-level hierarchy directly from one labeling.
    pub fn single_level(labeling: SupervoxelLabeling) -> Self {
        SegmentationHierarchy {
            levels: vec![labeling],
            cut_heights: vec![-1.0],
        }
    }

    /// Verifies nesting: each segment at level n+1 is an exact union of
    /// level-n segments.
    pub fn validate_nesting(&self) -> Result<()> {
        for n in 0..self.levels.len().saturating_sub(1) {
            let fine = &self.levels[n];
            let coarse = &self.levels[n + 1];
            // every fine region must map to exactly one coarse label
            let mut map = vec![0u32; fine.num_regions + 1];
            for (i, &fl) in fine.labels.data.iter().enumerate() {
                let cl = coarse.labels.data[i];
                let slot = &mut map[fl as usize];
                if *slot == 0 {
                    *slot = cl;
                } else if *slot != cl {
                    return Err(Error::InvalidArgument(format!(
                        "nesting violated between levels {} and {}: fine region {} spans coarse regions {} and {}",
                        n + 1, n + 2, fl, *slot, cl
                    )));
                }
            }
        }
        Ok(())
    }
}
