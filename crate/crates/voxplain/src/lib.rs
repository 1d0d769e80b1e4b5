//! voxplain: visual explanations for volumetric CNN classifiers.
//!
//! The crate trains small 3D convolutional networks on dense scalar volumes
//! and produces voxel-level importance heatmaps via four attribution
//! methods: per-voxel occlusion, hierarchical-segmentation sensitivity
//! analysis, class activation mapping (CAM), and gradient-weighted class
//! activation mapping (Grad-CAM). A benchmark module scores heatmaps
//! against ground-truth masks with precision-recall curves and evaluates
//! classifiers with cross-validated AUC/ACC.

pub mod attribution;
pub mod bench;
pub mod dataset;
pub mod error;
pub mod io;
pub mod nn;
pub mod phantom;
pub mod seg;
pub mod tensor;

pub use error::{Error, Result};
