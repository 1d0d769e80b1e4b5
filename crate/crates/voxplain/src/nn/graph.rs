use crate::error::{Error, Result};
use crate::tensor::Dims;
use serde::{Deserialize, Serialize};

/// Spatial padding policy for convolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Zero-pad so the output grid equals the input grid (stride 1).
    Same,
    /// No padding; the grid shrinks by kernel-1.
    Valid,
}

/// One layer of the network DAG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LayerKind {
    Conv3d {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
    },
    Maxpool3d {
        kernel: usize,
        stride: usize,
        ceil_mode: bool,
    },
    Batchnorm {
        features: usize,
    },
    Relu,
    ResidualAdd,
    FullyConnected {
        in_features: usize,
        out_features: usize,
    },
    GlobalAveragePool,
    Dropout {
        rate: f32,
    },
    /// Output layer: class-weight matrix + bias producing the logits,
    /// normalized by softmax. The class weights w_u live here.
    Softmax {
        in_features: usize,
        classes: usize,
    },
}

/// Where a layer reads its input from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PortRef {
    /// The network input volume.
    Input,
    /// Output of an earlier node (topological index).
    Node(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub name: String,
    pub kind: LayerKind,
    pub inputs: Vec<PortRef>,
}

/// Propagated shape of a feature between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Spatial { channels: usize, dims: Dims },
    Vector { len: usize },
}

impl Shape {
    pub fn flat_len(&self) -> usize {
        match *self {
            Shape::Spatial { channels, dims } => channels * dims.0 * dims.1 * dims.2,
            Shape::Vector { len } => len,
        }
    }

    pub fn spatial_dims(&self) -> Option<Dims> {
        match *self {
            Shape::Spatial { dims, .. } => Some(dims),
            Shape::Vector { .. } => None,
        }
    }
}

/// Ordered DAG of named layers. Nodes may only reference earlier nodes, so
/// the graph is acyclic by construction; the final node must be the softmax
/// output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelGraph {
    pub nodes: Vec<Node>,
    pub input_dims: Dims,
    pub input_channels: usize,
    pub classes: usize,
}

fn pool_out(d: usize, k: usize, s: usize, ceil_mode: bool) -> Result<usize> {
    if d < k && !ceil_mode {
        return Err(Error::InvalidArgument(format!(
            "pool kernel {k} exceeds extent {d}"
        )));
    }
    let n = if ceil_mode {
        (d.saturating_sub(k) + s - 1) / s + 1
    } else {
        (d - k) / s + 1
    };
    Ok(n.max(1))
}

impl ModelGraph {
    pub fn node_index(&self, name: &str) -> Result<usize> {
        self.nodes
            .iter()
            .position(|n| n.name == name)
            .ok_or_else(|| Error::UnknownLayer(name.to_string()))
    }

    pub fn output_index(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Shape of every node output, checked for consistency. The final node
    /// must be the softmax output layer.
    pub fn propagate_shapes(&self) -> Result<Vec<Shape>> {
        let shapes = self.propagate_shapes_prefix()?;
        match self.nodes.last().map(|n| &n.kind) {
            Some(LayerKind::Softmax { .. }) => Ok(shapes),
            _ => Err(Error::ShapeError {
                layer: "<graph>".into(),
                reason: "final node must be the softmax output layer".into(),
            }),
        }
    }

    /// Shape propagation for a graph still under construction (no softmax
    /// tail required).
    pub(crate) fn propagate_shapes_prefix(&self) -> Result<Vec<Shape>> {
        let mut shapes: Vec<Shape> = Vec::with_capacity(self.nodes.len());
        let input_shape = Shape::Spatial {
            channels: self.input_channels,
            dims: self.input_dims,
        };
        for (idx, node) in self.nodes.iter().enumerate() {
            let fail = |reason: String| Error::ShapeError {
                layer: node.name.clone(),
                reason,
            };
            let resolve = |p: &PortRef| -> Result<Shape> {
                match *p {
                    PortRef::Input => Ok(input_shape),
                    PortRef::Node(i) => {
                        if i >= idx {
                            Err(fail(format!("input reference {i} is not an earlier node")))
                        } else {
                            Ok(shapes[i])
                        }
                    }
                }
            };
            let arity = if matches!(node.kind, LayerKind::ResidualAdd) {
                2
            } else {
                1
            };
            if node.inputs.len() != arity {
                return Err(fail(format!(
                    "expected {arity} input(s), got {}",
                    node.inputs.len()
                )));
            }
            let a = resolve(&node.inputs[0])?;
            let out = match node.kind {
                LayerKind::Conv3d {
                    in_ch,
                    out_ch,
                    kernel,
                    stride,
                    padding,
                } => {
                    if kernel == 0 || stride == 0 || in_ch == 0 || out_ch == 0 {
                        return Err(fail("conv hyperparameters must be positive".into()));
                    }
                    let Shape::Spatial { channels, dims } = a else {
                        return Err(fail("conv input must be spatial".into()));
                    };
                    if channels != in_ch {
                        return Err(fail(format!(
                            "channel mismatch: input {channels}, layer expects {in_ch}"
                        )));
                    }
                    let out_d = |d: usize| -> Result<usize> {
                        match padding {
                            Padding::Same => Ok((d + stride - 1) / stride),
                            Padding::Valid => {
                                if d < kernel {
                                    Err(fail(format!("extent {d} smaller than kernel {kernel}")))
                                } else {
                                    Ok((d - kernel) / stride + 1)
                                }
                            }
                        }
                    };
                    Shape::Spatial {
                        channels: out_ch,
                        dims: (out_d(dims.0)?, out_d(dims.1)?, out_d(dims.2)?),
                    }
                }
                LayerKind::Maxpool3d {
                    kernel,
                    stride,
                    ceil_mode,
                } => {
                    if kernel == 0 || stride == 0 {
                        return Err(fail("pool hyperparameters must be positive".into()));
                    }
                    let Shape::Spatial { channels, dims } = a else {
                        return Err(fail("pool input must be spatial".into()));
                    };
                    Shape::Spatial {
                        channels,
                        dims: (
                            pool_out(dims.0, kernel, stride, ceil_mode).map_err(|e| fail(e.to_string()))?,
                            pool_out(dims.1, kernel, stride, ceil_mode).map_err(|e| fail(e.to_string()))?,
                            pool_out(dims.2, kernel, stride, ceil_mode).map_err(|e| fail(e.to_string()))?,
                        ),
                    }
                }
                LayerKind::Batchnorm { features } => {
                    let got = match a {
                        Shape::Spatial { channels, .. } => channels,
                        Shape::Vector { len } => len,
                    };
                    if got != features {
                        return Err(fail(format!(
                            "batchnorm features {features} != input features {got}"
                        )));
                    }
                    a
                }
                LayerKind::Relu | LayerKind::Dropout { .. } => a,
                LayerKind::ResidualAdd => {
                    let b = resolve(&node.inputs[1])?;
                    if a != b {
                        return Err(fail(format!(
                            "skip connection joins incompatible shapes {a:?} and {b:?}"
                        )));
                    }
                    a
                }
                LayerKind::FullyConnected {
                    in_features,
                    out_features,
                } => {
                    if a.flat_len() != in_features {
                        return Err(fail(format!(
                            "fc expects {in_features} inputs, got {}",
                            a.flat_len()
                        )));
                    }
                    Shape::Vector { len: out_features }
                }
                LayerKind::GlobalAveragePool => {
                    let Shape::Spatial { channels, .. } = a else {
                        return Err(fail("global average pool input must be spatial".into()));
                    };
                    Shape::Vector { len: channels }
                }
                LayerKind::Softmax {
                    in_features,
                    classes,
                } => {
                    if a.flat_len() != in_features {
                        return Err(fail(format!(
                            "softmax expects {in_features} inputs, got {}",
                            a.flat_len()
                        )));
                    }
                    if classes != self.classes {
                        return Err(fail(format!(
                            "softmax classes {classes} != graph classes {}",
                            self.classes
                        )));
                    }
                    Shape::Vector { len: classes }
                }
            };
            shapes.push(out);
        }
        Ok(shapes)
    }

    /// Index of the last node whose output is a convolutional feature grid:
    /// the last conv or residual-add node in topological order.
    pub fn last_conv_index(&self) -> Result<usize> {
        self.nodes
            .iter()
            .rposition(|n| {
                matches!(
                    n.kind,
                    LayerKind::Conv3d { .. } | LayerKind::ResidualAdd
                )
            })
            .ok_or_else(|| Error::InvalidArgument("graph has no convolutional node".into()))
    }

    pub fn last_conv_name(&self) -> Result<&str> {
        Ok(&self.nodes[self.last_conv_index()?].name)
    }

    /// True when the head is exactly global-average-pool feeding the softmax
    /// output layer.
    pub fn is_gap_head(&self) -> bool {
        let n = self.nodes.len();
        if n < 2 {
            return false;
        }
        let gap = matches!(self.nodes[n - 2].kind, LayerKind::GlobalAveragePool);
        let sm = matches!(self.nodes[n - 1].kind, LayerKind::Softmax { .. });
        let wired = self.nodes[n - 1].inputs == vec![PortRef::Node(n - 2)];
        gap && sm && wired
    }

    /// Whether `idx` lies on a directed path to the output node.
    pub fn on_head_path(&self, idx: usize) -> bool {
        let out = self.output_index();
        let mut reach = vec![false; self.nodes.len()];
        reach[out] = true;
        for i in (0..self.nodes.len()).rev() {
            if !reach[i] {
                continue;
            }
            for p in &self.nodes[i].inputs {
                if let PortRef::Node(j) = *p {
                    reach[j] = true;
                }
            }
        }
        reach[idx]
    }
}
