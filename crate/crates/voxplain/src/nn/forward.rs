use super::graph::{LayerKind, ModelGraph, Padding, PortRef};
use super::params::{LayerParams, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Dims, Volume};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Batched activation tensor. Vector features use dims (1,1,1) with the
/// vector length as the channel count. Spatial layout is x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub batch: usize,
    pub channels: usize,
    pub dims: Dims,
    pub data: Vec<f64>,
}

impl Feature {
    pub fn zeros(batch: usize, channels: usize, dims: Dims) -> Self {
        Feature {
            batch,
            channels,
            dims,
            data: vec![0.0; batch * channels * dims.0 * dims.1 * dims.2],
        }
    }

    pub fn vector(batch: usize, len: usize) -> Self {
        Self::zeros(batch, len, (1, 1, 1))
    }

    /// Voxels per channel grid (the denominator Z of a global average).
    #[inline]
    pub fn spatial_len(&self) -> usize {
        self.dims.0 * self.dims.1 * self.dims.2
    }

    #[inline]
    pub fn plane(&self, n: usize, c: usize) -> &[f64] {
        let sp = self.spatial_len();
        let off = (n * self.channels + c) * sp;
        &self.data[off..off + sp]
    }

    #[inline]
    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [f64] {
        let sp = self.spatial_len();
        let off = (n * self.channels + c) * sp;
        &mut self.data[off..off + sp]
    }

    /// Per-sample flattened view (all channels).
    #[inline]
    pub fn sample(&self, n: usize) -> &[f64] {
        let len = self.channels * self.spatial_len();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn from_volumes(vols: &[&Volume]) -> Result<Self> {
        let dims = vols
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty batch".into()))?
            .dims();
        let mut f = Feature::zeros(vols.len(), 1, dims);
        for (n, v) in vols.iter().enumerate() {
            if v.dims() != dims {
                return Err(Error::DimMismatch {
                    expected: dims,
                    got: v.dims(),
                });
            }
            for (dst, &src) in f.plane_mut(n, 0).iter_mut().zip(v.data()) {
                *dst = src as f64;
            }
        }
        Ok(f)
    }

    pub fn from_volume(v: &Volume) -> Self {
        Feature::from_volumes(&[v]).expect("single volume batch")
    }
}

/// Forward execution mode. Train mode uses batch statistics for batch norm
/// and samples dropout masks from the supplied RNG; eval mode uses running
/// statistics and disables dropout, making the pass a pure function.
pub enum Mode<'a> {
    Eval,
    Train { rng: &'a mut ChaCha8Rng },
}

/// Per-layer side products kept for the backward pass.
#[derive(Debug, Clone)]
pub enum Aux {
    None,
    /// Input flat indices of each pooled maximum.
    Pool(Vec<u32>),
    /// The normalization statistics actually used (batch or running).
    Bn { mean: Vec<f64>, var: Vec<f64> },
    /// Inverted-dropout mask (0 or 1/(1-rate)).
    Dropout(Vec<f64>),
}

/// Outputs of the softmax head layer.
#[derive(Debug, Clone)]
pub struct HeadOut {
    pub probs: Vec<f64>,
    pub logits: Vec<f64>,
    /// Logits minus the output bias; attribution scores exclude the bias.
    pub class_scores: Vec<f64>,
}

/// Everything one forward pass produced: every node's output, the softmax
/// probabilities, the logits, and the bias-excluded class scores. All
/// per-class vectors are `[batch][class]` row-major.
#[derive(Debug, Clone)]
pub struct BatchCache {
    pub outputs: Vec<Feature>,
    pub aux: Vec<Aux>,
    pub probs: Vec<f64>,
    pub logits: Vec<f64>,
    pub class_scores: Vec<f64>,
    pub batch: usize,
    pub classes: usize,
}

impl BatchCache {
    pub fn prob(&self, n: usize, class: usize) -> f64 {
        self.probs[n * self.classes + class]
    }

    pub fn score(&self, n: usize, class: usize) -> f64 {
        self.class_scores[n * self.classes + class]
    }
}

/// Single-volume forward result with convenience accessors.
#[derive(Debug, Clone)]
pub struct ActivationCache {
    pub inner: BatchCache,
}

impl ActivationCache {
    pub fn probs(&self) -> [f64; 2] {
        [self.inner.probs[0], self.inner.probs[1]]
    }

    pub fn score(&self, class: usize) -> f64 {
        self.inner.class_scores[class]
    }

    pub fn layer(&self, graph: &ModelGraph, name: &str) -> Result<&Feature> {
        Ok(&self.inner.outputs[graph.node_index(name)?])
    }

    /// Pooled features F_u for GAP-headed models.
    pub fn gap_features(&self, graph: &ModelGraph) -> Result<&[f64]> {
        let idx = graph
            .nodes
            .iter()
            .rposition(|n| matches!(n.kind, LayerKind::GlobalAveragePool))
            .ok_or(Error::NotGapModel)?;
        Ok(self.inner.outputs[idx].sample(0))
    }
}

pub(super) fn same_pad(kernel: usize) -> usize {
    (kernel - 1) / 2
}

fn conv_out_dims(dims: Dims, kernel: usize, stride: usize, padding: Padding) -> Dims {
    let f = |d: usize| match padding {
        Padding::Same => (d + stride - 1) / stride,
        Padding::Valid => (d - kernel) / stride + 1,
    };
    (f(dims.0), f(dims.1), f(dims.2))
}

fn pool_out_dim(d: usize, k: usize, s: usize, ceil_mode: bool) -> usize {
    let n = if ceil_mode {
        (d.saturating_sub(k) + s - 1) / s + 1
    } else {
        (d - k) / s + 1
    };
    n.max(1)
}

/// Visits, for one kernel offset, every aligned (output-row, input-row)
/// slice pair where out[x,y,z] maps to in[x*s+kx-p, y*s+ky-p, z*s+kz-p].
/// Ranges are clipped to the valid overlap. The callback receives flat
/// half-open ranges into the output and input planes; with stride > 1 the
/// input range covers a strided walk of the same element count.
pub(super) fn shifted_rows<F: FnMut((usize, usize), (usize, usize))>(
    (ox, oy, oz): Dims,
    (ix, iy, iz): Dims,
    (kx, ky, kz): Dims,
    p: usize,
    stride: usize,
    mut f: F,
) {
    let lo = |k: usize| {
        if k >= p {
            0
        } else {
            (p - k + stride - 1) / stride
        }
    };
    let hi = |k: usize, i: usize, o: usize| {
        if i + p < k + 1 {
            0
        } else {
            (((i - 1 + p - k) / stride) + 1).min(o)
        }
    };
    let (xlo, xhi) = (lo(kx), hi(kx, ix, ox));
    let (ylo, yhi) = (lo(ky), hi(ky, iy, oy));
    let (zlo, zhi) = (lo(kz), hi(kz, iz, oz));
    if xlo >= xhi || ylo >= yhi || zlo >= zhi {
        return;
    }
    for z in zlo..zhi {
        let sz = z * stride + kz - p;
        for y in ylo..yhi {
            let sy = y * stride + ky - p;
            let orow = z * oy * ox + y * ox;
            let srow = sz * iy * ix + sy * ix;
            let slo = srow + xlo * stride + kx - p;
            let shi = slo + (xhi - xlo - 1) * stride + 1;
            f((orow + xlo, orow + xhi), (slo, shi));
        }
    }
}

pub(super) fn conv_forward(
    input: &Feature,
    w: &[f64],
    bias: &[f64],
    out_ch: usize,
    kernel: usize,
    stride: usize,
    padding: Padding,
) -> Feature {
    let in_ch = input.channels;
    let idims = input.dims;
    let odims = conv_out_dims(idims, kernel, stride, padding);
    let mut out = Feature::zeros(input.batch, out_ch, odims);
    let p = match padding {
        Padding::Same => same_pad(kernel),
        Padding::Valid => 0,
    };
    let sp_out = odims.0 * odims.1 * odims.2;
    for n in 0..input.batch {
        for oc in 0..out_ch {
            let obase = (n * out_ch + oc) * sp_out;
            out.data[obase..obase + sp_out].fill(bias[oc]);
            for ic in 0..in_ch {
                let wbase = (oc * in_ch + ic) * kernel * kernel * kernel;
                for kz in 0..kernel {
                    for ky in 0..kernel {
                        for kx in 0..kernel {
                            let wv = w[wbase + (kz * kernel + ky) * kernel + kx];
                            let splane = (n * in_ch + ic) * input.spatial_len();
                            shifted_rows(odims, idims, (kx, ky, kz), p, stride, |o, s| {
                                if stride == 1 {
                                    for i in 0..o.1 - o.0 {
                                        out.data[obase + o.0 + i] +=
                                            wv * input.data[splane + s.0 + i];
                                    }
                                } else {
                                    for i in 0..o.1 - o.0 {
                                        out.data[obase + o.0 + i] +=
                                            wv * input.data[splane + s.0 + i * stride];
                                    }
                                }
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

fn maxpool_forward(input: &Feature, k: usize, s: usize, ceil_mode: bool) -> (Feature, Vec<u32>) {
    let (ix, iy, iz) = input.dims;
    let odims = (
        pool_out_dim(ix, k, s, ceil_mode),
        pool_out_dim(iy, k, s, ceil_mode),
        pool_out_dim(iz, k, s, ceil_mode),
    );
    let mut out = Feature::zeros(input.batch, input.channels, odims);
    let mut argmax = vec![0u32; out.data.len()];
    let sp_in = input.spatial_len();
    let mut oi = 0usize;
    for n in 0..input.batch {
        for c in 0..input.channels {
            let plane_off = (n * input.channels + c) * sp_in;
            let src = input.plane(n, c);
            for z in 0..odims.2 {
                for y in 0..odims.1 {
                    for x in 0..odims.0 {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_i = 0usize;
                        for dz in 0..k {
                            let sz = z * s + dz;
                            if sz >= iz {
                                break;
                            }
                            for dy in 0..k {
                                let sy = y * s + dy;
                                if sy >= iy {
                                    break;
                                }
                                for dx in 0..k {
                                    let sx = x * s + dx;
                                    if sx >= ix {
                                        break;
                                    }
                                    let i = sz * iy * ix + sy * ix + sx;
                                    if src[i] > best {
                                        best = src[i];
                                        best_i = i;
                                    }
                                }
                            }
                        }
                        out.data[oi] = best;
                        argmax[oi] = (plane_off + best_i) as u32;
                        oi += 1;
                    }
                }
            }
        }
    }
    (out, argmax)
}

/// Affine map of flattened sample features; the output layer omits its
/// bias when computing attribution scores.
fn affine(x: &Feature, w: &[f64], b: &[f64], in_f: usize, out_f: usize, with_bias: bool) -> Vec<f64> {
    let mut y = vec![0.0f64; x.batch * out_f];
    for n in 0..x.batch {
        let xs = x.sample(n);
        for o in 0..out_f {
            let row = &w[o * in_f..(o + 1) * in_f];
            let mut acc = if with_bias { b[o] } else { 0.0 };
            for (wv, xv) in row.iter().zip(xs) {
                acc += wv * xv;
            }
            y[n * out_f + o] = acc;
        }
    }
    y
}

fn softmax_rows(logits: &[f64], classes: usize) -> Vec<f64> {
    let mut probs = vec![0.0f64; logits.len()];
    for (lrow, prow) in logits.chunks(classes).zip(probs.chunks_mut(classes)) {
        let m = lrow.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (p, &l) in prow.iter_mut().zip(lrow) {
            *p = (l - m).exp();
            sum += *p;
        }
        for p in prow.iter_mut() {
            *p /= sum;
        }
    }
    probs
}

/// Evaluates one node given resolved inputs. Returns the output feature,
/// any backward-pass aux, and the head products when the node is the
/// softmax output layer.
fn eval_node(
    node_name: &str,
    kind: &LayerKind,
    layer: &LayerParams,
    inputs: &[&Feature],
    mode: &mut Mode<'_>,
) -> Result<(Feature, Aux, Option<HeadOut>)> {
    let x = inputs[0];
    let batch = x.batch;
    let mut aux = Aux::None;
    let mut head = None;
    let y = match (kind, layer) {
        (
            LayerKind::Conv3d {
                out_ch,
                kernel,
                stride,
                padding,
                ..
            },
            LayerParams::Conv { w, b },
        ) => conv_forward(x, w, b, *out_ch, *kernel, *stride, *padding),
        (
            LayerKind::Maxpool3d {
                kernel,
                stride,
                ceil_mode,
            },
            _,
        ) => {
            let (y, am) = maxpool_forward(x, *kernel, *stride, *ceil_mode);
            aux = Aux::Pool(am);
            y
        }
        (
            LayerKind::Batchnorm { features },
            LayerParams::Bn {
                gamma,
                beta,
                running_mean,
                running_var,
            },
        ) => {
            let f = *features;
            let sp = x.spatial_len();
            let (mean, var) = match mode {
                Mode::Eval => (
                    running_mean.clone(),
                    running_var.clone(),
                ),
                Mode::Train { .. } => {
                    let count = (batch * sp) as f64;
                    let mut mean = vec![0.0f64; f];
                    let mut var = vec![0.0f64; f];
                    for n in 0..batch {
                        for c in 0..f {
                            mean[c] += x.plane(n, c).iter().sum::<f64>();
                        }
                    }
                    for m in mean.iter_mut() {
                        *m /= count;
                    }
                    for n in 0..batch {
                        for c in 0..f {
                            var[c] += x
                                .plane(n, c)
                                .iter()
                                .map(|&v| (v - mean[c]) * (v - mean[c]))
                                .sum::<f64>();
                        }
                    }
                    for v in var.iter_mut() {
                        *v /= count;
                    }
                    (mean, var)
                }
            };
            let mut y = Feature::zeros(batch, x.channels, x.dims);
            for n in 0..batch {
                for c in 0..f {
                    let g = gamma[c];
                    let b = beta[c];
                    let m = mean[c];
                    let inv = 1.0 / (var[c] + BN_EPS).sqrt();
                    for (dst, &src) in y.plane_mut(n, c).iter_mut().zip(x.plane(n, c)) {
                        *dst = g * (src - m) * inv + b;
                    }
                }
            }
            aux = Aux::Bn { mean, var };
            y
        }
        (LayerKind::Relu, _) => {
            let mut y = x.clone();
            for v in y.data.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            y
        }
        (LayerKind::ResidualAdd, _) => {
            let b = inputs[1];
            if b.dims != x.dims || b.channels != x.channels {
                return Err(Error::ShapeError {
                    layer: node_name.to_string(),
                    reason: "residual branches have different shapes".into(),
                });
            }
            let mut y = x.clone();
            for (dst, &src) in y.data.iter_mut().zip(&b.data) {
                *dst += src;
            }
            y
        }
        (
            LayerKind::FullyConnected {
                in_features,
                out_features,
            },
            LayerParams::Fc { w, b },
        ) => {
            let mut y = Feature::vector(batch, *out_features);
            y.data = affine(x, w, b, *in_features, *out_features, true);
            y
        }
        (LayerKind::GlobalAveragePool, _) => {
            let sp = x.spatial_len() as f64;
            let mut y = Feature::vector(batch, x.channels);
            for n in 0..batch {
                for c in 0..x.channels {
                    y.data[n * x.channels + c] = x.plane(n, c).iter().sum::<f64>() / sp;
                }
            }
            y
        }
        (LayerKind::Dropout { rate }, _) => match mode {
            Mode::Eval => x.clone(),
            Mode::Train { rng } => {
                let keep = 1.0 - *rate as f64;
                let mask: Vec<f64> = (0..x.data.len())
                    .map(|_| {
                        if rng.gen::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let mut y = x.clone();
                for (v, m) in y.data.iter_mut().zip(&mask) {
                    *v *= m;
                }
                aux = Aux::Dropout(mask);
                y
            }
        },
        (
            LayerKind::Softmax {
                in_features,
                classes,
            },
            LayerParams::Output { w, b },
        ) => {
            let class_scores = affine(x, w, b, *in_features, *classes, false);
            let logits: Vec<f64> = class_scores
                .iter()
                .enumerate()
                .map(|(i, &s)| s + b[i % classes])
                .collect();
            let probs = softmax_rows(&logits, *classes);
            let mut y = Feature::vector(batch, *classes);
            y.data.copy_from_slice(&probs);
            head = Some(HeadOut {
                probs,
                logits,
                class_scores,
            });
            y
        }
        _ => {
            return Err(Error::ShapeError {
                layer: node_name.to_string(),
                reason: "parameter store does not match layer kind".into(),
            })
        }
    };
    if !y.data.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite(node_name.to_string()));
    }
    Ok((y, aux, head))
}

fn run_nodes(
    graph: &ModelGraph,
    params: &ParamStore,
    input: &Feature,
    outputs: &mut Vec<Feature>,
    aux: &mut Vec<Aux>,
    start: usize,
    mut mode: Mode<'_>,
) -> Result<HeadOut> {
    let mut head = None;
    for idx in start..graph.nodes.len() {
        let node = &graph.nodes[idx];
        let feats: Vec<&Feature> = node
            .inputs
            .iter()
            .map(|p| match *p {
                PortRef::Input => input,
                PortRef::Node(i) => &outputs[i],
            })
            .collect();
        let (y, a, h) = eval_node(&node.name, &node.kind, &params.layers[idx], &feats, &mut mode)?;
        if let Some(h) = h {
            head = Some(h);
        }
        if idx < outputs.len() {
            outputs[idx] = y;
            aux[idx] = a;
        } else {
            outputs.push(y);
            aux.push(a);
        }
    }
    head.ok_or_else(|| Error::ShapeError {
        layer: "<graph>".into(),
        reason: "graph has no softmax output layer".into(),
    })
}

/// Runs every node in order and caches all intermediates.
pub fn forward_batch(
    graph: &ModelGraph,
    params: &ParamStore,
    input: &Feature,
    mode: Mode<'_>,
) -> Result<BatchCache> {
    if input.dims != graph.input_dims || input.channels != graph.input_channels {
        return Err(Error::DimMismatch {
            expected: graph.input_dims,
            got: input.dims,
        });
    }
    let mut outputs = Vec::with_capacity(graph.nodes.len());
    let mut aux = Vec::with_capacity(graph.nodes.len());
    let head = run_nodes(graph, params, input, &mut outputs, &mut aux, 0, mode)?;
    Ok(BatchCache {
        outputs,
        aux,
        probs: head.probs,
        logits: head.logits,
        class_scores: head.class_scores,
        batch: input.batch,
        classes: graph.classes,
    })
}

/// One forward pass over a single volume.
pub fn forward(
    graph: &ModelGraph,
    params: &ParamStore,
    v: &Volume,
    mode: Mode<'_>,
) -> Result<ActivationCache> {
    let input = Feature::from_volume(v);
    let inner = forward_batch(graph, params, &input, mode)?;
    Ok(ActivationCache { inner })
}

/// Re-runs the graph tail (eval semantics) with node `at`'s output
/// replaced, reusing cached outputs upstream. The network input itself is
/// never re-read because every node after `at` consumes node outputs.
pub fn forward_from(
    graph: &ModelGraph,
    params: &ParamStore,
    cache: &BatchCache,
    at: usize,
    replacement: Feature,
) -> Result<HeadOut> {
    let mut outputs = cache.outputs.clone();
    let mut aux: Vec<Aux> = (0..graph.nodes.len()).map(|_| Aux::None).collect();
    outputs[at] = replacement;
    let dummy = Feature::zeros(cache.batch, graph.input_channels, graph.input_dims);
    run_nodes(graph, params, &dummy, &mut outputs, &mut aux, at + 1, Mode::Eval)
}
