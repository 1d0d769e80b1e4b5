use super::forward::{same_pad, shifted_rows, Aux, BatchCache, Feature, BN_EPS};
use super::graph::{LayerKind, ModelGraph, Padding, PortRef};
use super::params::{LayerParams, ParamStore};
use crate::error::{Error, Result};

/// Gradient injected at the output layer.
pub enum OutputSeed {
    /// d(pre-softmax class score)/d(...) for one class; the output bias is
    /// not part of the score, so its gradient stays zero.
    ClassScore(usize),
    /// Arbitrary per-logit gradients, `[batch][class]` row-major. Used for
    /// the cross-entropy training gradient (probs minus one-hot).
    LogitGrads(Vec<f64>),
}

pub struct BackwardOptions {
    pub seed: OutputSeed,
    /// Stop the reverse walk at this node and return the gradient with
    /// respect to its output instead of descending further.
    pub stop_at: Option<usize>,
    pub want_input_grad: bool,
    /// Differentiate through batch statistics (training) rather than
    /// treating the normalization statistics as constants (inference).
    pub bn_batch_stats: bool,
}

impl BackwardOptions {
    pub fn for_training(logit_grads: Vec<f64>) -> Self {
        BackwardOptions {
            seed: OutputSeed::LogitGrads(logit_grads),
            stop_at: None,
            want_input_grad: false,
            bn_batch_stats: true,
        }
    }

    pub fn score_to_layer(class: usize, stop_at: usize) -> Self {
        BackwardOptions {
            seed: OutputSeed::ClassScore(class),
            stop_at: Some(stop_at),
            want_input_grad: false,
            bn_batch_stats: false,
        }
    }
}

/// Result of a backward pass.
pub struct Grads {
    /// Parameter gradients, aligned with the parameter store. Batch-norm
    /// running statistics are never populated.
    pub params: ParamStore,
    /// Gradient at `stop_at`'s output, when requested.
    pub layer_grad: Option<Feature>,
    pub input_grad: Option<Feature>,
}

fn add_assign(dst: &mut Feature, src: &Feature) {
    for (d, s) in dst.data.iter_mut().zip(&src.data) {
        *d += s;
    }
}

fn accumulate(slot: &mut Option<Feature>, g: Feature) {
    match slot {
        Some(existing) => add_assign(existing, &g),
        None => *slot = Some(g),
    }
}

/// Reverse-mode pass over the cached forward activations.
pub fn backward(
    graph: &ModelGraph,
    params: &ParamStore,
    input: &Feature,
    cache: &BatchCache,
    opts: &BackwardOptions,
) -> Result<Grads> {
    let n_nodes = graph.nodes.len();
    let batch = cache.batch;
    let mut grads: Vec<Option<Feature>> = (0..n_nodes).map(|_| None).collect();
    let mut pgrads = params.zeros_like();
    let mut input_grad = opts
        .want_input_grad
        .then(|| Feature::zeros(batch, input.channels, input.dims));

    let feature_of = |p: &PortRef| -> &Feature {
        match *p {
            PortRef::Input => input,
            PortRef::Node(i) => &cache.outputs[i],
        }
    };

    for idx in (0..n_nodes).rev() {
        if opts.stop_at == Some(idx) {
            let g = grads[idx]
                .take()
                .ok_or_else(|| Error::LayerOffPath(graph.nodes[idx].name.clone()))?;
            return Ok(Grads {
                params: pgrads,
                layer_grad: Some(g),
                input_grad,
            });
        }
        let node = &graph.nodes[idx];
        let is_head = matches!(node.kind, LayerKind::Softmax { .. });
        let gout = if is_head {
            None
        } else {
            match grads[idx].take() {
                Some(g) => Some(g),
                None => continue, // node does not feed the requested output
            }
        };
        let x = feature_of(&node.inputs[0]);
        // gradients flowing to each input port, in port order
        let mut gins: Vec<Feature> = Vec::with_capacity(node.inputs.len());
        match (&node.kind, &params.layers[idx], &mut pgrads.layers[idx]) {
            (
                LayerKind::Softmax {
                    in_features,
                    classes,
                },
                LayerParams::Output { w, .. },
                LayerParams::Output { w: dw, b: db },
            ) => {
                let mut gin = Feature::vector(batch, *in_features);
                match &opts.seed {
                    OutputSeed::ClassScore(cl) => {
                        let row = &w[cl * in_features..(cl + 1) * in_features];
                        let drow = &mut dw[cl * in_features..(cl + 1) * in_features];
                        for n in 0..batch {
                            let xs = x.sample(n);
                            let gs = &mut gin.data[n * in_features..(n + 1) * in_features];
                            for i in 0..*in_features {
                                drow[i] += xs[i];
                                gs[i] += row[i];
                            }
                        }
                    }
                    OutputSeed::LogitGrads(g) => {
                        if g.len() != batch * classes {
                            return Err(Error::InvalidArgument(
                                "logit gradient length does not match batch".into(),
                            ));
                        }
                        for n in 0..batch {
                            let xs = x.sample(n);
                            let gs = &mut gin.data[n * in_features..(n + 1) * in_features];
                            for cl in 0..*classes {
                                let gv = g[n * classes + cl];
                                if gv == 0.0 {
                                    continue;
                                }
                                db[cl] += gv;
                                let row = &w[cl * in_features..(cl + 1) * in_features];
                                let drow = &mut dw[cl * in_features..(cl + 1) * in_features];
                                for i in 0..*in_features {
                                    drow[i] += gv * xs[i];
                                    gs[i] += gv * row[i];
                                }
                            }
                        }
                    }
                }
                gins.push(gin);
            }
            (
                LayerKind::Conv3d {
                    in_ch,
                    out_ch,
                    kernel,
                    stride,
                    padding,
                },
                LayerParams::Conv { w, .. },
                LayerParams::Conv { w: dw, b: db },
            ) => {
                let gout = gout.as_ref().expect("non-head node has output grad");
                let k3 = kernel * kernel * kernel;
                let p = match padding {
                    Padding::Same => same_pad(*kernel),
                    Padding::Valid => 0,
                };
                let mut gin = Feature::zeros(batch, *in_ch, x.dims);
                for n in 0..batch {
                    for oc in 0..*out_ch {
                        let gplane = gout.plane(n, oc);
                        db[oc] += gplane.iter().sum::<f64>();
                        for ic in 0..*in_ch {
                            let xplane = x.plane(n, ic);
                            let gin_plane = gin.plane_mut(n, ic);
                            let wbase = (oc * in_ch + ic) * k3;
                            for kz in 0..*kernel {
                                for ky in 0..*kernel {
                                    for kx in 0..*kernel {
                                        let wi = wbase + (kz * kernel + ky) * kernel + kx;
                                        let wv = w[wi];
                                        let mut acc = 0.0f64;
                                        shifted_rows(
                                            gout.dims,
                                            x.dims,
                                            (kx, ky, kz),
                                            p,
                                            *stride,
                                            |o, s| {
                                                for i in 0..o.1 - o.0 {
                                                    let g = gplane[o.0 + i];
                                                    let si = s.0 + i * stride;
                                                    acc += g * xplane[si];
                                                    gin_plane[si] += wv * g;
                                                }
                                            },
                                        );
                                        dw[wi] += acc;
                                    }
                                }
                            }
                        }
                    }
                }
                gins.push(gin);
            }
            (LayerKind::Maxpool3d { .. }, _, _) => {
                let gout = gout.as_ref().expect("non-head node has output grad");
                let argmax = match &cache.aux[idx] {
                    Aux::Pool(a) => a,
                    _ => {
                        return Err(Error::ShapeError {
                            layer: node.name.clone(),
                            reason: "missing pooling indices in forward cache".into(),
                        })
                    }
                };
                let mut gin = Feature::zeros(batch, x.channels, x.dims);
                for (gi, &src_idx) in gout.data.iter().zip(argmax) {
                    gin.data[src_idx as usize] += gi;
                }
                gins.push(gin);
            }
            (
                LayerKind::Batchnorm { features },
                LayerParams::Bn { gamma, .. },
                LayerParams::Bn {
                    gamma: dgamma,
                    beta: dbeta,
                    ..
                },
            ) => {
                let gout = gout.as_ref().expect("non-head node has output grad");
                let (mean, var) = match &cache.aux[idx] {
                    Aux::Bn { mean, var } => (mean, var),
                    _ => {
                        return Err(Error::ShapeError {
                            layer: node.name.clone(),
                            reason: "missing normalization statistics in forward cache".into(),
                        })
                    }
                };
                let sp = x.spatial_len();
                let count = (batch * sp) as f64;
                let mut gin = Feature::zeros(batch, x.channels, x.dims);
                for c in 0..*features {
                    let m = mean[c];
                    let inv = 1.0 / (var[c] + BN_EPS).sqrt();
                    let mut sum_g = 0.0f64;
                    let mut sum_gx = 0.0f64;
                    for n in 0..batch {
                        for (&g, &xv) in gout.plane(n, c).iter().zip(x.plane(n, c)) {
                            sum_g += g;
                            sum_gx += g * (xv - m) * inv;
                        }
                    }
                    dgamma[c] += sum_gx;
                    dbeta[c] += sum_g;
                    let scale = gamma[c] * inv;
                    for n in 0..batch {
                        let xp = x.plane(n, c);
                        let gp = gout.plane(n, c);
                        let op = gin.plane_mut(n, c);
                        for i in 0..sp {
                            let correction = if opts.bn_batch_stats {
                                (sum_g + (xp[i] - m) * inv * sum_gx) / count
                            } else {
                                0.0
                            };
                            op[i] = scale * (gp[i] - correction);
                        }
                    }
                }
                gins.push(gin);
            }
            (LayerKind::Relu, _, _) => {
                let mut gin = gout.clone().expect("non-head node has output grad");
                let y = &cache.outputs[idx];
                for (g, &yv) in gin.data.iter_mut().zip(&y.data) {
                    if yv <= 0.0 {
                        *g = 0.0;
                    }
                }
                gins.push(gin);
            }
            (LayerKind::ResidualAdd, _, _) => {
                let g = gout.expect("non-head node has output grad");
                gins.push(g.clone());
                gins.push(g);
            }
            (
                LayerKind::FullyConnected {
                    in_features,
                    out_features,
                },
                LayerParams::Fc { w, .. },
                LayerParams::Fc { w: dw, b: db },
            ) => {
                let gout = gout.as_ref().expect("non-head node has output grad");
                let mut gin = Feature::vector(batch, *in_features);
                for n in 0..batch {
                    let xs = x.sample(n);
                    let gs = &mut gin.data[n * in_features..(n + 1) * in_features];
                    for o in 0..*out_features {
                        let gv = gout.data[n * out_features + o];
                        if gv == 0.0 {
                            continue;
                        }
                        db[o] += gv;
                        let row = &w[o * in_features..(o + 1) * in_features];
                        let drow = &mut dw[o * in_features..(o + 1) * in_features];
                        for i in 0..*in_features {
                            drow[i] += gv * xs[i];
                            gs[i] += gv * row[i];
                        }
                    }
                }
                gins.push(gin);
            }
            (LayerKind::GlobalAveragePool, _, _) => {
                let gout = gout.as_ref().expect("non-head node has output grad");
                let sp = x.spatial_len();
                let z = sp as f64;
                let mut gin = Feature::zeros(batch, x.channels, x.dims);
                for n in 0..batch {
                    for c in 0..x.channels {
                        let gv = gout.data[n * x.channels + c] / z;
                        for v in gin.plane_mut(n, c) {
                            *v = gv;
                        }
                    }
                }
                gins.push(gin);
            }
            (LayerKind::Dropout { .. }, _, _) => {
                let mut gin = gout.expect("non-head node has output grad");
                if let Aux::Dropout(mask) = &cache.aux[idx] {
                    for (g, m) in gin.data.iter_mut().zip(mask) {
                        *g *= m;
                    }
                }
                gins.push(gin);
            }
            _ => {
                return Err(Error::ShapeError {
                    layer: node.name.clone(),
                    reason: "parameter store does not match layer kind".into(),
                })
            }
        }

        for (port, gin) in node.inputs.iter().zip(gins) {
            match *port {
                PortRef::Input => {
                    if let Some(ig) = input_grad.as_mut() {
                        add_assign(ig, &gin);
                    }
                }
                PortRef::Node(i) => accumulate(&mut grads[i], gin),
            }
        }
    }

    if let Some(stop) = opts.stop_at {
        // the loop always reaches stop_at before index 0 unless it was out
        // of range
        return Err(Error::LayerOffPath(format!("node index {stop}")));
    }
    Ok(Grads {
        params: pgrads,
        layer_grad: None,
        input_grad,
    })
}
