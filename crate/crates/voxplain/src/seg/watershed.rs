use super::SupervoxelLabeling;
use crate::error::{Error, Result};
use crate::tensor::{voxel_count, Dims, LabelGrid, Volume};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::cmp::Reverse;
use std::collections::BinaryHeap;

/// 3D gradient magnitude with central differences (one-sided at borders).
fn gradient_magnitude(v: &Volume) -> Vec<f32> {
    let (dx, dy, dz) = v.dims();
    let g = &v.grid;
    let mut out = vec![0.0f32; voxel_count(v.dims())];
    let diff = |a: f32, b: f32, span: f32| (a - b) / span;
    let mut i = 0usize;
    for z in 0..dz {
        for y in 0..dy {
            for x in 0..dx {
                let gx = if dx == 1 {
                    0.0
                } else {
                    let x0 = x.saturating_sub(1);
                    let x1 = (x + 1).min(dx - 1);
                    diff(g.at(x1, y, z), g.at(x0, y, z), (x1 - x0) as f32)
                };
                let gy = if dy == 1 {
                    0.0
                } else {
                    let y0 = y.saturating_sub(1);
                    let y1 = (y + 1).min(dy - 1);
                    diff(g.at(x, y1, z), g.at(x, y0, z), (y1 - y0) as f32)
                };
                let gz = if dz == 1 {
                    0.0
                } else {
                    let z0 = z.saturating_sub(1);
                    let z1 = (z + 1).min(dz - 1);
                    diff(g.at(x, y, z1), g.at(x, y, z0), (z1 - z0) as f32)
                };
                out[i] = (gx * gx + gy * gy + gz * gz).sqrt();
                i += 1;
            }
        }
    }
    out
}

fn neighbors6(dims: Dims, idx: usize, out: &mut Vec<usize>) {
    out.clear();
    let (dx, dy, dz) = dims;
    let x = idx % dx;
    let y = (idx / dx) % dy;
    let z = idx / (dx * dy);
    if x > 0 {
        out.push(idx - 1);
    }
    if x + 1 < dx {
        out.push(idx + 1);
    }
    if y > 0 {
        out.push(idx - dx);
    }
    if y + 1 < dy {
        out.push(idx + dx);
    }
    if z > 0 {
        out.push(idx - dx * dy);
    }
    if z + 1 < dz {
        out.push(idx + dx * dy);
    }
}

/// Seeded watershed on the gradient-magnitude field.
///
/// `n_seeds` voxels are drawn without replacement from a seeded RNG and
/// flooded in priority order of gradient magnitude; every voxel ends up in
/// the region of the seed it is first reached from, so regions are
/// 6-connected and labels `1..=K` form a full partition with `K <= n_seeds`.
pub fn oversegment(v: &Volume, n_seeds: usize, seed: u64) -> Result<SupervoxelLabeling> {
    let n = voxel_count(v.dims());
    if n_seeds == 0 || n_seeds > n {
        return Err(Error::InvalidArgument(format!(
            "n_seeds must be in 1..={n}, got {n_seeds}"
        )));
    }
    let grad = gradient_magnitude(v);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut all: Vec<usize> = (0..n).collect();
    all.shuffle(&mut rng);
    let mut seeds: Vec<usize> = all[..n_seeds].to_vec();
    seeds.sort_unstable();

    let mut labels = vec![0u32; n];
    // heap entries: Reverse((priority bits, insertion seq, voxel, label))
    // gradient magnitude is non-negative so bit order equals numeric order
    let mut heap: BinaryHeap<Reverse<(u32, u64, usize, u32)>> = BinaryHeap::new();
    let mut seq = 0u64;
    for (k, &s) in seeds.iter().enumerate() {
        labels[s] = (k + 1) as u32;
        heap.push(Reverse((grad[s].to_bits(), seq, s, (k + 1) as u32)));
        seq += 1;
    }

    let mut nbrs = Vec::with_capacity(6);
    while let Some(Reverse((_, _, idx, label))) = heap.pop() {
        neighbors6(v.dims(), idx, &mut nbrs);
        for k in 0..nbrs.len() {
            let nb = nbrs[k];
            if labels[nb] == 0 {
                labels[nb] = label;
                heap.push(Reverse((grad[nb].to_bits(), seq, nb, label)));
                seq += 1;
            }
        }
    }

    let labeling = SupervoxelLabeling {
        labels: LabelGrid::new(v.dims(), labels)?,
        num_regions: n_seeds,
    };
    labeling.validate_partition()?;
    Ok(labeling)
}
