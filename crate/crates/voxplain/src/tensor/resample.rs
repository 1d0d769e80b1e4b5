use super::{voxel_count, Dims, Grid3};
use crate::error::{Error, Result};

/// Trilinear resampling onto `target_dims` with the align-corners
/// convention: the first and last samples of every axis map onto each
/// other, so source and target span the same extent. Exact on globally
/// affine fields; output values stay inside the source value range.
pub fn trilinear_upsample(g: &Grid3, target_dims: Dims) -> Result<Grid3> {
    if target_dims.0 == 0 || target_dims.1 == 0 || target_dims.2 == 0 {
        return Err(Error::InvalidArgument(
            "target dims must be positive on every axis".into(),
        ));
    }
    if g.dims.0 == 0 || g.dims.1 == 0 || g.dims.2 == 0 {
        return Err(Error::InvalidArgument(
            "source dims must be positive on every axis".into(),
        ));
    }

    let (sx, sy, sz) = g.dims;
    let (tx, ty, tz) = target_dims;

    // align-corners scale: target index i maps to source coordinate i*scale
    let scale = |s: usize, t: usize| -> f64 {
        if t <= 1 {
            0.0
        } else {
            (s as f64 - 1.0) / (t as f64 - 1.0)
        }
    };
    let fx = scale(sx, tx);
    let fy = scale(sy, ty);
    let fz = scale(sz, tz);

    let split = |coord: f64, len: usize| -> (usize, usize, f64) {
        let c = coord.clamp(0.0, (len - 1) as f64);
        let i0 = c.floor() as usize;
        let i1 = (i0 + 1).min(len - 1);
        (i0, i1, c - i0 as f64)
    };

    let mut out = Vec::with_capacity(voxel_count(target_dims));
    for z in 0..tz {
        let (z0, z1, wz) = split(z as f64 * fz, sz);
        for y in 0..ty {
            let (y0, y1, wy) = split(y as f64 * fy, sy);
            for x in 0..tx {
                let (x0, x1, wx) = split(x as f64 * fx, sx);
                let c000 = g.at(x0, y0, z0) as f64;
                let c100 = g.at(x1, y0, z0) as f64;
                let c010 = g.at(x0, y1, z0) as f64;
                let c110 = g.at(x1, y1, z0) as f64;
                let c001 = g.at(x0, y0, z1) as f64;
                let c101 = g.at(x1, y0, z1) as f64;
                let c011 = g.at(x0, y1, z1) as f64;
                let c111 = g.at(x1, y1, z1) as f64;
                let c00 = c000 + (c100 - c000) * wx;
                let c10 = c010 + (c110 - c010) * wx;
                let c01 = c001 + (c101 - c001) * wx;
                let c11 = c011 + (c111 - c011) * wx;
                let c0 = c00 + (c10 - c00) * wy;
                let c1 = c01 + (c11 - c01) * wy;
                out.push((c0 + (c1 - c0) * wz) as f32);
            }
        }
    }
    Grid3::new(target_dims, out)
}
