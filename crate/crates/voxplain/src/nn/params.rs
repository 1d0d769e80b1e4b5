use super::graph::{LayerKind, ModelGraph};
use crate::error::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Learnable arrays (plus batch-norm running statistics) for one layer.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    None,
    Conv {
        /// `[out_ch][in_ch][kz][ky][kx]`
        w: Vec<f64>,
        b: Vec<f64>,
    },
    Bn {
        gamma: Vec<f64>,
        beta: Vec<f64>,
        running_mean: Vec<f64>,
        running_var: Vec<f64>,
    },
    Fc {
        /// `[out][in]`
        w: Vec<f64>,
        b: Vec<f64>,
    },
    /// Output layer: class weights `[class][in]` and per-class biases.
    Output { w: Vec<f64>, b: Vec<f64> },
}

/// Per-layer parameters aligned with the graph's node order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    pub layers: Vec<LayerParams>,
}

fn normal(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    // Box-Muller; two uniforms per draw keeps the stream simple and seeded
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos() * std
}

impl ParamStore {
    /// He/Xavier-initialized parameters, deterministic per seed.
    pub fn init(graph: &ModelGraph, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = graph
            .nodes
            .iter()
            .map(|node| match node.kind {
                LayerKind::Conv3d {
                    in_ch,
                    out_ch,
                    kernel,
                    ..
                } => {
                    let fan_in = in_ch * kernel * kernel * kernel;
                    let std = (2.0 / fan_in as f64).sqrt();
                    let w = (0..out_ch * fan_in).map(|_| normal(&mut rng, std)).collect();
                    LayerParams::Conv {
                        w,
                        b: vec![0.0; out_ch],
                    }
                }
                LayerKind::Batchnorm { features } => LayerParams::Bn {
                    gamma: vec![1.0; features],
                    beta: vec![0.0; features],
                    running_mean: vec![0.0; features],
                    running_var: vec![1.0; features],
                },
                LayerKind::FullyConnected {
                    in_features,
                    out_features,
                } => {
                    let std = (2.0 / in_features as f64).sqrt();
                    let w = (0..out_features * in_features)
                        .map(|_| normal(&mut rng, std))
                        .collect();
                    LayerParams::Fc {
                        w,
                        b: vec![0.0; out_features],
                    }
                }
                LayerKind::Softmax {
                    in_features,
                    classes,
                } => {
                    let std = (1.0 / in_features as f64).sqrt();
                    let w = (0..classes * in_features)
                        .map(|_| normal(&mut rng, std))
                        .collect();
                    LayerParams::Output {
                        w,
                        b: vec![0.0; classes],
                    }
                }
                _ => LayerParams::None,
            })
            .collect();
        ParamStore { layers }
    }

    /// Same structure with every array zeroed; gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                LayerParams::None => LayerParams::None,
                LayerParams::Conv { w, b } => LayerParams::Conv {
                    w: vec![0.0; w.len()],
                    b: vec![0.0; b.len()],
                },
                LayerParams::Bn {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                } => LayerParams::Bn {
                    gamma: vec![0.0; gamma.len()],
                    beta: vec![0.0; beta.len()],
                    running_mean: vec![0.0; running_mean.len()],
                    running_var: vec![0.0; running_var.len()],
                },
                LayerParams::Fc { w, b } => LayerParams::Fc {
                    w: vec![0.0; w.len()],
                    b: vec![0.0; b.len()],
                },
                LayerParams::Output { w, b } => LayerParams::Output {
                    w: vec![0.0; w.len()],
                    b: vec![0.0; b.len()],
                },
            })
            .collect();
        ParamStore { layers }
    }

    /// Output-layer class weights `[class][in]` and biases.
    pub fn output_weights(&self) -> Result<(&[f64], &[f64])> {
        match self.layers.last() {
            Some(LayerParams::Output { w, b }) => Ok((w, b)),
            _ => Err(Error::InvalidArgument(
                "parameter store has no output layer".into(),
            )),
        }
    }

    /// All arrays in manifest (node, then role) order. Role names are
    /// stable and used in the checkpoint manifest.
    pub fn named_arrays(&self, graph: &ModelGraph) -> Vec<(String, String, &Vec<f64>)> {
        let mut out = Vec::new();
        for (node, lp) in graph.nodes.iter().zip(&self.layers) {
            let name = node.name.clone();
            match lp {
                LayerParams::None => {}
                LayerParams::Conv { w, b } => {
                    out.push((name.clone(), "conv.w".into(), w));
                    out.push((name, "conv.b".into(), b));
                }
                LayerParams::Bn {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                } => {
                    out.push((name.clone(), "bn.gamma".into(), gamma));
                    out.push((name.clone(), "bn.beta".into(), beta));
                    out.push((name.clone(), "bn.running_mean".into(), running_mean));
                    out.push((name, "bn.running_var".into(), running_var));
                }
                LayerParams::Fc { w, b } => {
                    out.push((name.clone(), "fc.w".into(), w));
                    out.push((name, "fc.b".into(), b));
                }
                LayerParams::Output { w, b } => {
                    out.push((name.clone(), "out.w".into(), w));
                    out.push((name, "out.b".into(), b));
                }
            }
        }
        out
    }

    /// Mutable views of every array, in the same order as `named_arrays`.
    pub fn arrays_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::new();
        for lp in &mut self.layers {
            match lp {
                LayerParams::None => {}
                LayerParams::Conv { w, b } | LayerParams::Fc { w, b } | LayerParams::Output { w, b } => {
                    out.push(w);
                    out.push(b);
                }
                LayerParams::Bn {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                } => {
                    out.push(gamma);
                    out.push(beta);
                    out.push(running_mean);
                    out.push(running_var);
                }
            }
        }
        out
    }

    pub fn arrays(&self) -> Vec<&Vec<f64>> {
        let mut out = Vec::new();
        for lp in &self.layers {
            match lp {
                LayerParams::None => {}
                LayerParams::Conv { w, b } | LayerParams::Fc { w, b } | LayerParams::Output { w, b } => {
                    out.push(w);
                    out.push(b);
                }
                LayerParams::Bn {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                } => {
                    out.push(gamma);
                    out.push(beta);
                    out.push(running_mean);
                    out.push(running_var);
                }
            }
        }
        out
    }

    pub fn total_len(&self) -> usize {
        self.arrays().iter().map(|a| a.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.arrays()
            .iter()
            .all(|a| a.iter().all(|v| v.is_finite()))
    }
}
