//! Single-file checkpoint format: a little-endian u32 manifest length, a
//! JSON manifest describing the graph and every parameter array, then the
//! raw float32 little-endian blob in manifest order.

use super::graph::ModelGraph;
use super::model::Model;
use super::params::ParamStore;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

pub const CHECKPOINT_FORMAT: &str = "voxplain-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ArrayEntry {
    layer: String,
    role: String,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    version: u32,
    graph: ModelGraph,
    arrays: Vec<ArrayEntry>,
}

/// Serializes parameters in manifest order as float32 little-endian.
pub fn save(model: &Model, path: &Path) -> Result<()> {
    let named = model.params.named_arrays(&model.graph);
    let manifest = Manifest {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        graph: model.graph.clone(),
        arrays: named
            .iter()
            .map(|(layer, role, a)| ArrayEntry {
                layer: layer.clone(),
                role: role.clone(),
                len: a.len(),
            })
            .collect(),
    };
    let header = serde_json::to_vec(&manifest)?;
    let mut blob = Vec::with_capacity(named.iter().map(|(_, _, a)| a.len() * 4).sum());
    for (_, _, a) in &named {
        for &v in a.iter() {
            blob.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    // write to a sibling temp file first so a crash never leaves a torn
    // checkpoint behind
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&(header.len() as u32).to_le_bytes())?;
        f.write_all(&header)?;
        f.write_all(&blob)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Model> {
    let mut f = fs::File::open(path)?;
    let mut len_bytes = [0u8; 4];
    f.read_exact(&mut len_bytes)
        .map_err(|_| Error::BadFormat("checkpoint shorter than its header length field".into()))?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let mut header = vec![0u8; header_len];
    f.read_exact(&mut header)
        .map_err(|_| Error::BadFormat("checkpoint manifest truncated".into()))?;
    let manifest: Manifest = serde_json::from_slice(&header)?;
    if manifest.format != CHECKPOINT_FORMAT || manifest.version != CHECKPOINT_VERSION {
        return Err(Error::BadFormat(format!(
            "unsupported checkpoint format {}/{}",
            manifest.format, manifest.version
        )));
    }
    manifest.graph.propagate_shapes()?;

    let mut blob = Vec::new();
    f.read_to_end(&mut blob)?;
    let expected: usize = manifest.arrays.iter().map(|a| a.len * 4).sum();
    if blob.len() != expected {
        return Err(Error::BlobLength {
            expected,
            actual: blob.len(),
        });
    }

    // rebuild the store structure from the graph, then fill from the blob
    // in manifest order, verifying layer/role alignment
    let mut params = ParamStore::init(&manifest.graph, 0);
    {
        let named: Vec<(String, String)> = params
            .named_arrays(&manifest.graph)
            .iter()
            .map(|(l, r, _)| (l.clone(), r.clone()))
            .collect();
        if named.len() != manifest.arrays.len() {
            return Err(Error::BadFormat("manifest array count mismatch".into()));
        }
        let mut offset = 0usize;
        let mut arrays = params.arrays_mut();
        for (ai, entry) in manifest.arrays.iter().enumerate() {
            if named[ai].0 != entry.layer || named[ai].1 != entry.role {
                return Err(Error::BadFormat(format!(
                    "manifest entry {}/{} does not match graph order",
                    entry.layer, entry.role
                )));
            }
            if arrays[ai].len() != entry.len {
                return Err(Error::BlobLength {
                    expected: arrays[ai].len() * 4,
                    actual: entry.len * 4,
                });
            }
            for v in arrays[ai].iter_mut() {
                let bytes: [u8; 4] = blob[offset..offset + 4].try_into().unwrap();
                *v = f32::from_le_bytes(bytes) as f64;
                offset += 4;
            }
        }
    }
    if !params.all_finite() {
        return Err(Error::NonFinite("checkpoint parameters".into()));
    }
    Ok(Model::new(manifest.graph, params))
}
