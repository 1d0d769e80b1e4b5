//! File formats and configuration: the volume container ([u32 LE header
//! length][JSON header][raw blob], x-fastest order), dataset manifests,
//! run configuration, and PGM slice export.

use crate::dataset::{ClassLabel, LabeledDataset, LabeledSample};
use crate::error::{Error, Result};
use crate::tensor::{
    minmax_normalize, minmax_normalize_grid, voxel_count, Grid3, Heatmap, LabelGrid,
    linear_index, Mask, Volume,
};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

pub const DATASET_FORMAT: &str = "voxplain-dataset";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeKind {
    Volume,
    Heatmap,
    Mask,
    Labels,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeHeader {
    pub dims: [usize; 3],
    pub dtype: String,
    pub spacing: [f32; 3],
    pub kind: VolumeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_range: Option<[f32; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_layer: Option<String>,
}

fn dtype_size(dtype: &str) -> Result<usize> {
    match dtype {
        "float32" | "uint32" => Ok(4),
        "uint8" => Ok(1),
        other => Err(Error::UnknownDtype(other.to_string())),
    }
}

/// Atomically writes `bytes` via a temp file in the same directory.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "artifact".into())
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn write_container(path: &Path, header: &VolumeHeader, blob: &[u8]) -> Result<()> {
    let expected = voxel_count((header.dims[0], header.dims[1], header.dims[2]))
        * dtype_size(&header.dtype)?;
    if blob.len() != expected {
        return Err(Error::BlobLength {
            expected,
            actual: blob.len(),
        });
    }
    let hjson = serde_json::to_vec(header)?;
    let mut bytes = Vec::with_capacity(4 + hjson.len() + blob.len());
    bytes.extend_from_slice(&(hjson.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&hjson);
    bytes.extend_from_slice(blob);
    atomic_write(path, &bytes)
}

fn read_container(path: &Path) -> Result<(VolumeHeader, Vec<u8>)> {
    let bytes = fs::read(path)?;
    if bytes.len() < 4 {
        return Err(Error::BadFormat(format!(
            "{}: file shorter than the header-length field",
            path.display()
        )));
    }
    let hlen = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    if bytes.len() < 4 + hlen {
        return Err(Error::BadFormat(format!(
            "{}: truncated header (declared {hlen} bytes)",
            path.display()
        )));
    }
    let header: VolumeHeader = serde_json::from_slice(&bytes[4..4 + hlen])?;
    let expected = voxel_count((header.dims[0], header.dims[1], header.dims[2]))
        * dtype_size(&header.dtype)?;
    let blob = bytes[4 + hlen..].to_vec();
    if blob.len() != expected {
        return Err(Error::BlobLength {
            expected,
            actual: blob.len(),
        });
    }
    Ok((header, blob))
}

fn f32_blob(data: &[f32]) -> Vec<u8> {
    let mut blob = Vec::with_capacity(data.len() * 4);
    for v in data {
        blob.extend_from_slice(&v.to_le_bytes());
    }
    blob
}

fn f32_from_blob(blob: &[u8]) -> Vec<f32> {
    blob.chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

pub fn write_volume(v: &Volume, path: &Path) -> Result<()> {
    let header = VolumeHeader {
        dims: [v.dims().0, v.dims().1, v.dims().2],
        dtype: "float32".into(),
        spacing: v.spacing,
        kind: VolumeKind::Volume,
        raw_range: None,
        source_layer: None,
    };
    write_container(path, &header, &f32_blob(v.data()))
}

pub fn read_volume(path: &Path) -> Result<Volume> {
    let (header, blob) = read_container(path)?;
    if header.kind != VolumeKind::Volume || header.dtype != "float32" {
        return Err(Error::BadFormat(format!(
            "{}: expected a float32 volume file",
            path.display()
        )));
    }
    let data = f32_from_blob(&blob);
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::BadFormat(format!(
            "{}: volume contains non-finite values",
            path.display()
        )));
    }
    let mut v = Volume::new((header.dims[0], header.dims[1], header.dims[2]), data)?;
    v.spacing = header.spacing;
    Ok(v)
}

pub fn write_heatmap(h: &Heatmap, path: &Path, source_layer: Option<&str>) -> Result<()> {
    let (lo, hi) = h.grid.min_max();
    let header = VolumeHeader {
        dims: [h.dims().0, h.dims().1, h.dims().2],
        dtype: "float32".into(),
        spacing: [1.0; 3],
        kind: VolumeKind::Heatmap,
        raw_range: Some([lo, hi]),
        source_layer: source_layer.map(str::to_string),
    };
    write_container(path, &header, &f32_blob(&h.grid.data))
}

pub fn read_heatmap(path: &Path) -> Result<Heatmap> {
    let (header, blob) = read_container(path)?;
    if header.kind != VolumeKind::Heatmap || header.dtype != "float32" {
        return Err(Error::BadFormat(format!(
            "{}: expected a float32 heatmap file",
            path.display()
        )));
    }
    Heatmap::new(Grid3::new(
        (header.dims[0], header.dims[1], header.dims[2]),
        f32_from_blob(&blob),
    )?)
}

pub fn write_mask(m: &Mask, path: &Path) -> Result<()> {
    let header = VolumeHeader {
        dims: [m.dims.0, m.dims.1, m.dims.2],
        dtype: "uint8".into(),
        spacing: [1.0; 3],
        kind: VolumeKind::Mask,
        raw_range: None,
        source_layer: None,
    };
    write_container(path, &header, &m.data)
}

pub fn read_mask(path: &Path) -> Result<Mask> {
    let (header, blob) = read_container(path)?;
    if header.kind != VolumeKind::Mask || header.dtype != "uint8" {
        return Err(Error::BadFormat(format!(
            "{}: expected a uint8 mask file",
            path.display()
        )));
    }
    Mask::new((header.dims[0], header.dims[1], header.dims[2]), blob)
}

pub fn write_labels(l: &LabelGrid, path: &Path) -> Result<()> {
    let header = VolumeHeader {
        dims: [l.dims.0, l.dims.1, l.dims.2],
        dtype: "uint32".into(),
        spacing: [1.0; 3],
        kind: VolumeKind::Labels,
        raw_range: None,
        source_layer: None,
    };
    let mut blob = Vec::with_capacity(l.data.len() * 4);
    for v in &l.data {
        blob.extend_from_slice(&v.to_le_bytes());
    }
    write_container(path, &header, &blob)
}

pub fn read_labels(path: &Path) -> Result<LabelGrid> {
    let (header, blob) = read_container(path)?;
    if header.kind != VolumeKind::Labels || header.dtype != "uint32" {
        return Err(Error::BadFormat(format!(
            "{}: expected a uint32 label file",
            path.display()
        )));
    }
    let data = blob
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    LabelGrid::new((header.dims[0], header.dims[1], header.dims[2]), data)
}

// ---------------------------------------------------------------------
// dataset manifest

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestSample {
    id: String,
    label: ClassLabel,
    volume: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mask: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetManifest {
    format: String,
    version: u32,
    samples: Vec<ManifestSample>,
    #[serde(default)]
    set_aside: Vec<usize>,
}

/// Writes every sample's volume (and mask, when present) plus a
/// `dataset.json` manifest into `dir`.
pub fn save_dataset(ds: &LabeledDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(ds.samples.len());
    for s in &ds.samples {
        let vol_name = format!("{}.vol", s.id);
        write_volume(&s.volume, &dir.join(&vol_name))?;
        let mask_name = if let Some(m) = &s.mask {
            let name = format!("{}.mask", s.id);
            write_mask(m, &dir.join(&name))?;
            Some(name)
        } else {
            None
        };
        entries.push(ManifestSample {
            id: s.id.clone(),
            label: s.label,
            volume: vol_name,
            mask: mask_name,
        });
    }
    let manifest = DatasetManifest {
        format: DATASET_FORMAT.into(),
        version: DATASET_VERSION,
        samples: entries,
        set_aside: ds.set_aside.clone(),
    };
    atomic_write(
        &dir.join("dataset.json"),
        &serde_json::to_vec_pretty(&manifest)?,
    )
}

/// Loads a dataset written by `save_dataset` from its manifest.
pub fn load_dataset(dir: &Path) -> Result<LabeledDataset> {
    let manifest: DatasetManifest =
        serde_json::from_slice(&fs::read(dir.join("dataset.json"))?)?;
    if manifest.format != DATASET_FORMAT || manifest.version != DATASET_VERSION {
        return Err(Error::BadFormat(format!(
            "{}: not a {DATASET_FORMAT} v{DATASET_VERSION} manifest",
            dir.display()
        )));
    }
    let mut samples = Vec::with_capacity(manifest.samples.len());
    for e in manifest.samples {
        let volume = read_volume(&dir.join(&e.volume))?;
        let mask = match e.mask {
            Some(name) => Some(read_mask(&dir.join(name))?),
            None => None,
        };
        samples.push(LabeledSample {
            id: e.id,
            volume,
            label: e.label,
            mask,
        });
    }
    LabeledDataset::new(samples, manifest.set_aside)
}

// ---------------------------------------------------------------------
// run configuration

fn default_profile() -> String {
    "desk-32".into()
}
fn default_arch() -> String {
    "resnet-gap".into()
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_alpha() -> f32 {
    0.5
}
fn default_half_extent() -> usize {
    3
}
fn default_stride() -> usize {
    1
}
fn default_levels() -> usize {
    3
}
fn default_seeds() -> usize {
    64
}

/// Key/value configuration shared by the CLI subcommands. Unknown keys
/// are rejected; every field has a default so a resolved config can be
/// emitted verbatim.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub profile: String,
    pub arch: String,
    pub optimizer: Option<String>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub seed: u64,
    pub occlusion_half_extent: usize,
    pub occlusion_fill: f32,
    pub occlusion_stride: usize,
    pub seg_levels: usize,
    pub seg_seeds: usize,
    pub overlay_alpha: f32,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_dir: None,
            out_dir: default_out_dir(),
            checkpoint: None,
            profile: default_profile(),
            arch: default_arch(),
            optimizer: None,
            lr: None,
            batch_size: None,
            epochs: None,
            seed: 0,
            occlusion_half_extent: default_half_extent(),
            occlusion_fill: 0.0,
            occlusion_stride: default_stride(),
            seg_levels: default_levels(),
            seg_seeds: default_seeds(),
            overlay_alpha: default_alpha(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    /// Serializes the fully resolved configuration (defaults included).
    pub fn resolved_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

// ---------------------------------------------------------------------
// slice export

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliceAxis {
    /// fixed z (axial view)
    Horizontal,
    /// fixed x
    Sagittal,
    /// fixed y
    Coronal,
}

impl SliceAxis {
    pub const ALL: [SliceAxis; 3] = [SliceAxis::Horizontal, SliceAxis::Sagittal, SliceAxis::Coronal];

    pub fn name(self) -> &'static str {
        match self {
            SliceAxis::Horizontal => "horizontal",
            SliceAxis::Sagittal => "sagittal",
            SliceAxis::Coronal => "coronal",
        }
    }

    fn depth(self, dims: (usize, usize, usize)) -> usize {
        match self {
            SliceAxis::Horizontal => dims.2,
            SliceAxis::Sagittal => dims.0,
            SliceAxis::Coronal => dims.1,
        }
    }

    /// (width, height) of a slice image and the 3D position of pixel
    /// (i, j) at the given slice index.
    fn geometry(self, dims: (usize, usize, usize)) -> (usize, usize) {
        match self {
            SliceAxis::Horizontal => (dims.0, dims.1),
            SliceAxis::Sagittal => (dims.1, dims.2),
            SliceAxis::Coronal => (dims.0, dims.2),
        }
    }

    fn voxel(self, i: usize, j: usize, index: usize) -> (usize, usize, usize) {
        match self {
            SliceAxis::Horizontal => (i, j, index),
            SliceAxis::Sagittal => (index, i, j),
            SliceAxis::Coronal => (i, index, j),
        }
    }
}

/// Encodes a grayscale image as binary PGM (P5, maxval 255).
pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Renders one slice: heatmap and volume are min-max normalized over the
/// full 3D grid, then blended per pixel as
/// round(alpha*255*norm(h) + (1-alpha)*255*norm(v)).
pub fn render_slice(
    h: &Heatmap,
    v: &Volume,
    axis: SliceAxis,
    index: usize,
    alpha: f32,
) -> Result<(usize, usize, Vec<u8>)> {
    if h.dims() != v.dims() {
        return Err(Error::DimMismatch {
            expected: v.dims(),
            got: h.dims(),
        });
    }
    let dims = v.dims();
    let depth = axis.depth(dims);
    if index >= depth {
        return Err(Error::InvalidArgument(format!(
            "slice index {index} out of range for {} axis of depth {depth}",
            axis.name()
        )));
    }
    let nh = minmax_normalize(h);
    let nv = minmax_normalize_grid(&v.grid);
    let (w, hgt) = axis.geometry(dims);
    let mut pixels = Vec::with_capacity(w * hgt);
    for j in 0..hgt {
        for i in 0..w {
            let (x, y, z) = axis.voxel(i, j, index);
            let li = linear_index(dims, x, y, z);
            let val = alpha * 255.0 * nh.grid.data[li] + (1.0 - alpha) * 255.0 * nv.data[li];
            pixels.push(val.round().clamp(0.0, 255.0) as u8);
        }
    }
    Ok((w, hgt, pixels))
}

/// Writes one PGM per axis into `out_dir` (center slice unless an index
/// is given), returning the written paths.
pub fn export_slices(
    h: &Heatmap,
    v: &Volume,
    out_dir: &Path,
    stem: &str,
    index: Option<usize>,
    alpha: f32,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut paths = Vec::with_capacity(3);
    for axis in SliceAxis::ALL {
        let idx = index.unwrap_or(axis.depth(v.dims()) / 2);
        let (w, hgt, pixels) = render_slice(h, v, axis, idx, alpha)?;
        let path = out_dir.join(format!("{stem}-{}-{idx}.pgm", axis.name()));
        atomic_write(&path, &encode_pgm(w, hgt, &pixels))?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tmpdir(tag: &str) -> PathBuf {
        let d = std::env::temp_dir().join(format!("voxplain-io-{tag}-{}", std::process::id()));
        fs::create_dir_all(&d).unwrap();
        d
    }

    fn rand_volume(dims: (usize, usize, usize), seed: u64) -> Volume {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Volume::new(dims, (0..voxel_count(dims)).map(|_| rng.gen()).collect()).unwrap()
    }

    #[test]
    fn volume_round_trip_is_bit_identical() {
        let dir = tmpdir("vol");
        let mut v = rand_volume((5, 5, 5), 1);
        v.spacing = [1.5, 2.0, 2.5];
        let p = dir.join("v.vol");
        write_volume(&v, &p).unwrap();
        let r = read_volume(&p).unwrap();
        assert_eq!(v.data(), r.data());
        assert_eq!(v.spacing, r.spacing);
        assert_eq!(v.dims(), r.dims());
    }

    #[test]
    fn heatmap_mask_labels_round_trip() {
        let dir = tmpdir("hml");
        let dims = (4, 3, 2);
        let n = voxel_count(dims);
        let h = Heatmap::new(Grid3::new(dims, (0..n).map(|i| i as f32).collect()).unwrap())
            .unwrap();
        let hp = dir.join("h.vol");
        write_heatmap(&h, &hp, Some("conv5")).unwrap();
        let hr = read_heatmap(&hp).unwrap();
        assert_eq!(h.grid.data, hr.grid.data);
        let (header, _) = read_container(&hp).unwrap();
        assert_eq!(header.source_layer.as_deref(), Some("conv5"));
        assert_eq!(header.raw_range, Some([0.0, (n - 1) as f32]));

        let m = Mask::new(dims, (0..n).map(|i| u8::from(i % 3 == 0)).collect()).unwrap();
        let mp = dir.join("m.mask");
        write_mask(&m, &mp).unwrap();
        assert_eq!(read_mask(&mp).unwrap(), m);

        let l = LabelGrid::new(dims, (1..=n as u32).collect()).unwrap();
        let lp = dir.join("l.lab");
        write_labels(&l, &lp).unwrap();
        assert_eq!(read_labels(&lp).unwrap(), l);
    }

    #[test]
    fn kind_confusion_is_rejected() {
        let dir = tmpdir("kind");
        let v = rand_volume((3, 3, 3), 2);
        let p = dir.join("v.vol");
        write_volume(&v, &p).unwrap();
        assert!(matches!(read_heatmap(&p), Err(Error::BadFormat(_))));
        assert!(matches!(read_mask(&p), Err(Error::BadFormat(_))));
    }

    #[test]
    fn short_blob_reports_expected_and_actual() {
        let dir = tmpdir("short");
        let v = rand_volume((3, 3, 3), 3);
        let p = dir.join("v.vol");
        write_volume(&v, &p).unwrap();
        let mut bytes = fs::read(&p).unwrap();
        bytes.pop();
        fs::write(&p, &bytes).unwrap();
        match read_volume(&p) {
            Err(Error::BlobLength { expected, actual }) => {
                assert_eq!(expected, 27 * 4);
                assert_eq!(actual, 27 * 4 - 1);
            }
            other => panic!("expected BlobLength, got {other:?}"),
        }
    }

    #[test]
    fn blob_length_matches_dims_arithmetic() {
        // a (110,110,110) float32 header demands 5,324,000 blob bytes
        let header = VolumeHeader {
            dims: [110, 110, 110],
            dtype: "float32".into(),
            spacing: [1.0; 3],
            kind: VolumeKind::Volume,
            raw_range: None,
            source_layer: None,
        };
        let expected = voxel_count((110, 110, 110)) * dtype_size(&header.dtype).unwrap();
        assert_eq!(expected, 5_324_000);
        let dir = tmpdir("len");
        let p = dir.join("bad.vol");
        let err = write_container(&p, &header, &[0u8; 16]).unwrap_err();
        assert!(matches!(err, Error::BlobLength { expected: 5_324_000, actual: 16 }));
    }

    #[test]
    fn unknown_dtype_and_garbage_header_are_rejected() {
        let dir = tmpdir("dtype");
        let p = dir.join("x.vol");
        let header = serde_json::json!({
            "dims": [2, 2, 2],
            "dtype": "float64",
            "spacing": [1.0, 1.0, 1.0],
            "kind": "volume"
        });
        let hjson = serde_json::to_vec(&header).unwrap();
        let mut bytes = (hjson.len() as u32).to_le_bytes().to_vec();
        bytes.extend_from_slice(&hjson);
        bytes.extend_from_slice(&[0u8; 64]);
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_volume(&p), Err(Error::UnknownDtype(_))));

        fs::write(&p, b"zz").unwrap();
        assert!(matches!(read_volume(&p), Err(Error::BadFormat(_))));
    }

    #[test]
    fn non_finite_volume_is_rejected_on_read() {
        let dir = tmpdir("nonfinite");
        let p = dir.join("v.vol");
        let mut v = rand_volume((3, 3, 3), 4);
        write_volume(&v, &p).unwrap();
        // patch one payload float to NaN on disk
        let mut bytes = fs::read(&p).unwrap();
        let hlen = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
        let off = 4 + hlen;
        bytes[off..off + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_volume(&p), Err(Error::BadFormat(_))));
        v.grid.data[0] = 0.0; // silence unused-mut
        let _ = v;
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tmpdir("ds");
        let dims = (4, 4, 4);
        let samples = vec![
            LabeledSample {
                id: "s0".into(),
                volume: rand_volume(dims, 10),
                label: ClassLabel::Nc,
                mask: None,
            },
            LabeledSample {
                id: "s1".into(),
                volume: rand_volume(dims, 11),
                label: ClassLabel::Ad,
                mask: Some(
                    Mask::new(dims, (0..voxel_count(dims)).map(|i| u8::from(i < 5)).collect())
                        .unwrap(),
                ),
            },
        ];
        let ds = LabeledDataset::new(samples, vec![1]).unwrap();
        save_dataset(&ds, &dir).unwrap();
        let r = load_dataset(&dir).unwrap();
        assert_eq!(r.samples.len(), 2);
        assert_eq!(r.set_aside, vec![1]);
        for (a, b) in ds.samples.iter().zip(&r.samples) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.label, b.label);
            assert_eq!(a.volume.data(), b.volume.data());
            assert_eq!(a.mask, b.mask);
        }
    }

    #[test]
    fn run_config_rejects_unknown_keys_and_echoes_defaults() {
        let bad: std::result::Result<RunConfig, _> =
            serde_json::from_str(r#"{"seed": 3, "learning_rate": 0.1}"#);
        assert!(bad.is_err());
        let cfg: RunConfig = serde_json::from_str(r#"{"lr": 0.000027}"#).unwrap();
        assert_eq!(cfg.lr, Some(0.000027));
        let resolved = cfg.resolved_json().unwrap();
        assert!(resolved.contains("\"lr\":2.7e-5") || resolved.contains("\"lr\":0.000027"));
        assert!(resolved.contains("\"profile\":\"desk-32\""));
        assert!(resolved.contains("\"overlay_alpha\":0.5"));
    }

    #[test]
    fn rendered_pixels_match_blend_formula() {
        let dims = (6, 5, 4);
        let n = voxel_count(dims);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let v = Volume::new(dims, (0..n).map(|_| rng.gen::<f32>() * 4.0 - 2.0).collect())
            .unwrap();
        let h = Heatmap::new(
            Grid3::new(dims, (0..n).map(|_| rng.gen::<f32>() * 9.0).collect()).unwrap(),
        )
        .unwrap();
        let alpha = 0.3f32;
        let (w, hh, pixels) = render_slice(&h, &v, SliceAxis::Coronal, 2, alpha).unwrap();
        assert_eq!((w, hh), (6, 4));
        let nh = minmax_normalize(&h);
        let nv = minmax_normalize_grid(&v.grid);
        for j in 0..hh {
            for i in 0..w {
                let li = linear_index(dims, i, 2, j);
                let expected =
                    (alpha * 255.0 * nh.grid.data[li] + (1.0 - alpha) * 255.0 * nv.data[li])
                        .round() as u8;
                assert_eq!(pixels[j * w + i], expected, "pixel ({i},{j})");
            }
        }
    }

    #[test]
    fn constant_heatmap_overlay_shows_pure_volume() {
        let dims = (4, 4, 4);
        let n = voxel_count(dims);
        let v = Volume::new(dims, (0..n).map(|i| i as f32).collect()).unwrap();
        let h = Heatmap::new(Grid3::new(dims, vec![0.7; n]).unwrap()).unwrap();
        let alpha = 0.5f32;
        let (_, _, pixels) = render_slice(&h, &v, SliceAxis::Horizontal, 1, alpha).unwrap();
        let nv = minmax_normalize_grid(&v.grid);
        for (j, px) in pixels.iter().enumerate() {
            let (x, y) = (j % 4, j / 4);
            let li = linear_index(dims, x, y, 1);
            let expected = ((1.0 - alpha) * 255.0 * nv.data[li]).round() as u8;
            assert_eq!(*px, expected);
        }
    }

    #[test]
    fn export_writes_center_slices_with_valid_pgm_headers() {
        let dir = tmpdir("slices");
        let dims = (6, 8, 10);
        let v = rand_volume(dims, 30);
        let h = Heatmap::new(Grid3::new(dims, vec![0.0; voxel_count(dims)]).unwrap()).unwrap();
        let paths = export_slices(&h, &v, &dir, "demo", None, 0.5).unwrap();
        assert_eq!(paths.len(), 3);
        assert!(paths[0].file_name().unwrap().to_str().unwrap().contains("horizontal-5"));
        assert!(paths[1].file_name().unwrap().to_str().unwrap().contains("sagittal-3"));
        assert!(paths[2].file_name().unwrap().to_str().unwrap().contains("coronal-4"));
        for p in &paths {
            let bytes = fs::read(p).unwrap();
            assert!(bytes.starts_with(b"P5\n"));
        }
        // out-of-range slice index
        assert!(export_slices(&h, &v, &dir, "bad", Some(99), 0.5).is_err());
    }
}
