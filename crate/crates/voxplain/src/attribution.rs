//! Voxel-level attribution: occlusion baselines, hierarchical sensitivity
//! analysis, CAM, and Grad-CAM. Every method returns a heatmap aligned to
//! the explained volume.

use crate::error::{Error, Result};
use crate::nn::backward::{backward, BackwardOptions};
use crate::nn::forward::Feature;
use crate::nn::{LayerKind, Model};
use crate::seg::SegmentationHierarchy;
use crate::tensor::{
    trilinear_upsample, voxel_count, Grid3, Heatmap, Volume, VoxelRegion,
};

/// Worker count for occlusion fan-out; reads VOXPLAIN_THREADS, defaulting
/// to 1.
pub fn worker_count() -> usize {
    std::env::var("VOXPLAIN_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

fn probability(model: &Model, v: &Volume, class: usize) -> Result<f64> {
    Ok(model.predict(v)?.inner.probs[class])
}

/// Occludes `indices` in a working copy, evaluates the class probability,
/// then restores the copy from the original data.
fn occluded_probability(
    model: &Model,
    original: &Volume,
    work: &mut Volume,
    indices: &[usize],
    fill: f32,
    class: usize,
) -> Result<f64> {
    for &i in indices {
        work.grid.data[i] = fill;
    }
    let p = probability(model, work, class);
    for &i in indices {
        work.grid.data[i] = original.data()[i];
    }
    p
}

/// Occlusion sensitivity: each voxel's score is the absolute change in the
/// target-class probability when its cubic neighborhood (side
/// 2*half_extent+1, clipped at borders) is replaced by `fill`.
///
/// With `stride` > 1 only a stride-aligned subgrid of centers is
/// evaluated; remaining voxels take the value of their nearest evaluated
/// center. Stride 1 is the exact definition.
pub fn baseline_occlusion(
    model: &Model,
    v: &Volume,
    class: usize,
    half_extent: usize,
    fill: f32,
    stride: usize,
) -> Result<Heatmap> {
    if v.dims() != model.graph.input_dims {
        return Err(Error::DimMismatch {
            expected: model.graph.input_dims,
            got: v.dims(),
        });
    }
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be >= 1".into()));
    }
    let dims = v.dims();
    let base = probability(model, v, class)?;

    // stride-aligned evaluation centers
    let axis_points = |d: usize| -> Vec<usize> { (0..d).step_by(stride).collect() };
    let (xs, ys, zs) = (axis_points(dims.0), axis_points(dims.1), axis_points(dims.2));
    let mut centers = Vec::with_capacity(xs.len() * ys.len() * zs.len());
    for &z in &zs {
        for &y in &ys {
            for &x in &xs {
                centers.push((x, y, z));
            }
        }
    }

    let workers = worker_count().min(centers.len().max(1));
    let mut scores = vec![0.0f32; centers.len()];
    if workers <= 1 {
        let mut work = v.clone();
        for (slot, &c) in scores.iter_mut().zip(&centers) {
            let idx = VoxelRegion::cube(c, half_extent).indices(dims);
            let p = occluded_probability(model, v, &mut work, &idx, fill, class)?;
            *slot = (p - base).abs() as f32;
        }
    } else {
        let chunk = centers.len().div_ceil(workers);
        let results: Vec<Result<Vec<f32>>> = std::thread::scope(|s| {
            let handles: Vec<_> = centers
                .chunks(chunk)
                .map(|cs| {
                    s.spawn(move || -> Result<Vec<f32>> {
                        let mut work = v.clone();
                        cs.iter()
                            .map(|&c| {
                                let idx = VoxelRegion::cube(c, half_extent).indices(dims);
                                occluded_probability(model, v, &mut work, &idx, fill, class)
                                    .map(|p| (p - base).abs() as f32)
                            })
                            .collect()
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        let mut off = 0usize;
        for res in results {
            let part = res?;
            scores[off..off + part.len()].copy_from_slice(&part);
            off += part.len();
        }
    }

    // scatter back, nearest-filling between stride points
    let nearest = |v: usize, pts: &[usize]| -> usize {
        // points are 0, s, 2s...: nearest index with round-half-down ties
        let i = (v + stride / 2) / stride;
        i.min(pts.len() - 1)
    };
    let mut out = vec![0.0f32; voxel_count(dims)];
    let mut oi = 0usize;
    for z in 0..dims.2 {
        let zi = nearest(z, &zs);
        for y in 0..dims.1 {
            let yi = nearest(y, &ys);
            for x in 0..dims.0 {
                let xi = nearest(x, &xs);
                out[oi] = scores[(zi * ys.len() + yi) * xs.len() + xi];
                oi += 1;
            }
        }
    }
    Heatmap::new(Grid3::new(dims, out)?)
}

/// Hierarchical sensitivity analysis: a voxel's score is the mean, over
/// hierarchy levels, of the probability change when its segment at that
/// level is occluded. Issues exactly one reference pass plus one pass per
/// segment per level.
pub fn sa_hierarchical(
    model: &Model,
    v: &Volume,
    class: usize,
    hierarchy: &SegmentationHierarchy,
    fill: f32,
) -> Result<Heatmap> {
    if hierarchy.dims() != v.dims() {
        return Err(Error::DimMismatch {
            expected: v.dims(),
            got: hierarchy.dims(),
        });
    }
    if v.dims() != model.graph.input_dims {
        return Err(Error::DimMismatch {
            expected: model.graph.input_dims,
            got: v.dims(),
        });
    }
    let base = probability(model, v, class)?;
    let n_levels = hierarchy.num_levels();
    let mut acc = vec![0.0f64; voxel_count(v.dims())];
    let mut work = v.clone();
    for level in &hierarchy.levels {
        for region in level.region_voxels() {
            let p = occluded_probability(model, v, &mut work, &region, fill, class)?;
            let delta = (p - base).abs();
            for i in region {
                acc[i] += delta;
            }
        }
    }
    let out: Vec<f32> = acc.iter().map(|&s| (s / n_levels as f64) as f32).collect();
    Heatmap::new(Grid3::new(v.dims(), out)?)
}

/// Class activation mapping on a GAP-headed model: the absolute weighted
/// sum of last-conv activations, plus its trilinear upsampling to the
/// input grid.
pub fn cam(model: &Model, v: &Volume, class: usize) -> Result<(Grid3, Heatmap)> {
    if !model.graph.is_gap_head() {
        return Err(Error::NotGapModel);
    }
    let cache = model.predict(v)?;
    let layer_name = model.graph.last_conv_name()?.to_string();
    let feat = cache.layer(&model.graph, &layer_name)?;
    let (w, _) = model.params.output_weights()?;
    let units = feat.channels;
    let row = &w[class * units..(class + 1) * units];
    let coarse = weighted_activation_map(feat, row)?;
    let up = trilinear_upsample(&coarse, v.dims())?;
    Ok((coarse, Heatmap::new(up)?))
}

/// Signed CAM field (before the absolute value); its spatial mean equals
/// the class score exactly on a GAP model.
pub fn cam_signed_field(model: &Model, v: &Volume, class: usize) -> Result<Grid3> {
    if !model.graph.is_gap_head() {
        return Err(Error::NotGapModel);
    }
    let cache = model.predict(v)?;
    let layer_name = model.graph.last_conv_name()?.to_string();
    let feat = cache.layer(&model.graph, &layer_name)?;
    let (w, _) = model.params.output_weights()?;
    let units = feat.channels;
    let row = &w[class * units..(class + 1) * units];
    signed_map(feat, row)
}

fn signed_map(feat: &Feature, weights: &[f64]) -> Result<Grid3> {
    if weights.len() != feat.channels {
        return Err(Error::InvalidArgument(format!(
            "{} weights for {} units",
            weights.len(),
            feat.channels
        )));
    }
    let sp = feat.spatial_len();
    let mut acc = vec![0.0f64; sp];
    for (u, &wu) in weights.iter().enumerate() {
        for (a, &f) in acc.iter_mut().zip(feat.plane(0, u)) {
            *a += wu * f;
        }
    }
    Grid3::new(feat.dims, acc.iter().map(|&v| v as f32).collect())
}

fn weighted_activation_map(feat: &Feature, weights: &[f64]) -> Result<Grid3> {
    let signed = signed_map(feat, weights)?;
    Grid3::new(
        signed.dims,
        signed.data.iter().map(|v| v.abs()).collect(),
    )
}

/// Grad-CAM at any spatial node on the head path: unit weights are the
/// spatial average of the class-score gradient at that node, and the map
/// is the absolute weighted activation sum, upsampled to the input grid.
pub fn grad_cam(
    model: &Model,
    v: &Volume,
    layer: &str,
    class: usize,
) -> Result<(Grid3, Heatmap)> {
    let idx = model.graph.node_index(layer)?;
    if !model.graph.on_head_path(idx) {
        return Err(Error::LayerOffPath(layer.to_string()));
    }
    let cache = model.predict(v)?;
    let feat = &cache.inner.outputs[idx];
    if feat.dims == (1, 1, 1) && !matches!(model.graph.nodes[idx].kind, LayerKind::Conv3d { .. })
    {
        return Err(Error::InvalidArgument(format!(
            "layer `{layer}` has no spatial activation grid"
        )));
    }
    let input = Feature::from_volume(v);
    let grads = backward(
        &model.graph,
        &model.params,
        &input,
        &cache.inner,
        &BackwardOptions::score_to_layer(class, idx),
    )?;
    let g = grads.layer_grad.expect("stop_at always yields a gradient");
    let z = feat.spatial_len() as f64;
    let alphas: Vec<f64> = (0..feat.channels)
        .map(|u| g.plane(0, u).iter().sum::<f64>() / z)
        .collect();
    let coarse = weighted_activation_map(feat, &alphas)?;
    let up = trilinear_upsample(&coarse, v.dims())?;
    Ok((coarse, Heatmap::new(up)?))
}
