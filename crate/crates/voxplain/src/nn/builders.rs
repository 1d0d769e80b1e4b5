use super::graph::{LayerKind, ModelGraph, Node, Padding, PortRef};
use crate::error::Result;
use crate::tensor::Dims;
use serde::{Deserialize, Serialize};

/// Grid-size profile: the full-size geometry or a reduced one for
/// desk-scale experiments and tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleProfile {
    Paper110,
    Desk32,
}

impl ScaleProfile {
    pub fn input_dims(self) -> Dims {
        match self {
            ScaleProfile::Paper110 => (110, 110, 110),
            ScaleProfile::Desk32 => (32, 32, 32),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScaleProfile::Paper110 => "paper-110",
            ScaleProfile::Desk32 => "desk-32",
        }
    }
}

impl std::str::FromStr for ScaleProfile {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-110" => Ok(ScaleProfile::Paper110),
            "desk-32" => Ok(ScaleProfile::Desk32),
            other => Err(crate::Error::InvalidArgument(format!(
                "unknown profile `{other}` (expected paper-110 or desk-32)"
            ))),
        }
    }
}

/// The four architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelArch {
    Vgg3d,
    Resnet3d,
    Resnet3dGap,
    Resnet3dShallowGap,
}

impl ModelArch {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelArch::Vgg3d => "vgg",
            ModelArch::Resnet3d => "resnet",
            ModelArch::Resnet3dGap => "resnet-gap",
            ModelArch::Resnet3dShallowGap => "resnet-shallow-gap",
        }
    }
}

impl std::str::FromStr for ModelArch {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vgg" | "vgg3d" => Ok(ModelArch::Vgg3d),
            "resnet" | "resnet3d" => Ok(ModelArch::Resnet3d),
            "resnet-gap" => Ok(ModelArch::Resnet3dGap),
            "resnet-shallow-gap" => Ok(ModelArch::Resnet3dShallowGap),
            other => Err(crate::Error::InvalidArgument(format!(
                "unknown architecture `{other}`"
            ))),
        }
    }
}

pub fn build_model(arch: ModelArch, profile: ScaleProfile) -> Result<ModelGraph> {
    match arch {
        ModelArch::Vgg3d => build_vgg3d(profile),
        ModelArch::Resnet3d => build_resnet3d(profile),
        ModelArch::Resnet3dGap => build_resnet3d_gap(profile),
        ModelArch::Resnet3dShallowGap => build_resnet3d_shallow_gap(profile),
    }
}

struct GraphBuilder {
    nodes: Vec<Node>,
    input_dims: Dims,
}

impl GraphBuilder {
    fn new(input_dims: Dims) -> Self {
        GraphBuilder {
            nodes: Vec::new(),
            input_dims,
        }
    }

    fn last(&self) -> PortRef {
        if self.nodes.is_empty() {
            PortRef::Input
        } else {
            PortRef::Node(self.nodes.len() - 1)
        }
    }

    fn push(&mut self, name: &str, kind: LayerKind, inputs: Vec<PortRef>) -> PortRef {
        self.nodes.push(Node {
            name: name.to_string(),
            kind,
            inputs,
        });
        PortRef::Node(self.nodes.len() - 1)
    }

    fn chain(&mut self, name: &str, kind: LayerKind) -> PortRef {
        let prev = self.last();
        self.push(name, kind, vec![prev])
    }

    fn conv(&mut self, name: &str, in_ch: usize, out_ch: usize, padding: Padding) -> PortRef {
        self.chain(
            name,
            LayerKind::Conv3d {
                in_ch,
                out_ch,
                kernel: 3,
                stride: 1,
                padding,
            },
        )
    }

    fn pool(&mut self, name: &str, ceil_mode: bool) -> PortRef {
        self.chain(
            name,
            LayerKind::Maxpool3d {
                kernel: 2,
                stride: 2,
                ceil_mode,
            },
        )
    }

    /// Residual block `voxres{n}`: conv -> bn -> relu -> conv with the block
    /// input added back at `voxres{n}_out`.
    fn voxres(&mut self, n: usize, ch: usize) -> PortRef {
        let entry = self.last();
        self.push(
            &format!("voxres{n}_conv_a"),
            LayerKind::Conv3d {
                in_ch: ch,
                out_ch: ch,
                kernel: 3,
                stride: 1,
                padding: Padding::Same,
            },
            vec![entry],
        );
        self.chain(&format!("voxres{n}_bn"), LayerKind::Batchnorm { features: ch });
        self.chain(&format!("voxres{n}_relu"), LayerKind::Relu);
        let body = self.conv(&format!("voxres{n}_conv_b"), ch, ch, Padding::Same);
        self.push(&format!("voxres{n}_out"), LayerKind::ResidualAdd, vec![entry, body])
    }

    /// Flattened length of the current tail feature, by prefix propagation.
    fn tail_flat_len(&self) -> Result<usize> {
        let probe = ModelGraph {
            nodes: self.nodes.clone(),
            input_dims: self.input_dims,
            input_channels: 1,
            classes: 2,
        };
        let shapes = probe.propagate_shapes_prefix()?;
        Ok(shapes.last().map(|s| s.flat_len()).unwrap_or(0))
    }

    fn finish(self, classes: usize) -> Result<ModelGraph> {
        let g = ModelGraph {
            nodes: self.nodes,
            input_dims: self.input_dims,
            input_channels: 1,
            classes,
        };
        g.propagate_shapes()?;
        Ok(g)
    }
}

/// 3D-VGGNet: four conv+maxpool blocks, then FC -> batchnorm -> dropout ->
/// FC -> softmax output.
///
/// The full profile uses unpadded 3x3x3 convolutions (2, 2, 3, 3 per block)
/// with floor-mode pooling, taking the grid 110 -> 53 -> 24 -> 9 with the
/// last convolution at 3x3x3. The desk profile runs one same-padded
/// convolution per block.
pub fn build_vgg3d(profile: ScaleProfile) -> Result<ModelGraph> {
    let mut b = GraphBuilder::new(profile.input_dims());
    let (channels, convs_per_block, padding, fc_hidden): ([usize; 4], [usize; 4], Padding, (usize, usize)) =
        match profile {
            ScaleProfile::Paper110 => ([8, 16, 32, 64], [2, 2, 3, 3], Padding::Valid, (128, 64)),
            ScaleProfile::Desk32 => ([4, 8, 8, 16], [1, 1, 1, 1], Padding::Same, (32, 16)),
        };
    let mut in_ch = 1;
    for (block, (&ch, &n_conv)) in channels.iter().zip(&convs_per_block).enumerate() {
        let block = block + 1;
        for c in 0..n_conv {
            let suffix = (b'a' + c as u8) as char;
            b.conv(&format!("conv{block}{suffix}"), in_ch, ch, padding);
            b.chain(&format!("relu{block}{suffix}"), LayerKind::Relu);
            in_ch = ch;
        }
        b.pool(&format!("pool{block}"), false);
    }
    let flat = b.tail_flat_len()?;
    let (h1, h2) = fc_hidden;
    b.chain(
        "fc5",
        LayerKind::FullyConnected {
            in_features: flat,
            out_features: h1,
        },
    );
    b.chain("bn5", LayerKind::Batchnorm { features: h1 });
    b.chain("dropout5", LayerKind::Dropout { rate: 0.5 });
    b.chain(
        "fc6",
        LayerKind::FullyConnected {
            in_features: h1,
            out_features: h2,
        },
    );
    b.chain(
        "softmax",
        LayerKind::Softmax {
            in_features: h2,
            classes: 2,
        },
    );
    b.finish(2)
}

fn resnet_channels(profile: ScaleProfile) -> (usize, usize, usize) {
    match profile {
        ScaleProfile::Paper110 => (32, 64, 128),
        ScaleProfile::Desk32 => (4, 8, 8),
    }
}

fn resnet_trunk(profile: ScaleProfile, shallow: bool) -> GraphBuilder {
    let (c1, c2, c3) = resnet_channels(profile);
    let mut b = GraphBuilder::new(profile.input_dims());
    b.conv("conv1a", 1, c1, Padding::Same);
    b.chain("bn1a", LayerKind::Batchnorm { features: c1 });
    b.chain("relu1a", LayerKind::Relu);
    b.conv("conv1b", c1, c1, Padding::Same);
    b.chain("bn1b", LayerKind::Batchnorm { features: c1 });
    b.chain("relu1b", LayerKind::Relu);
    b.pool("pool1", true);
    b.voxres(2, c1);
    b.voxres(3, c1);
    if shallow {
        return b;
    }
    b.conv("conv4", c1, c2, Padding::Same);
    b.chain("bn4", LayerKind::Batchnorm { features: c2 });
    b.chain("relu4", LayerKind::Relu);
    b.pool("pool4", true);
    b.voxres(5, c2);
    b.voxres(6, c2);
    b.conv("conv7", c2, c3, Padding::Same);
    b.chain("bn7", LayerKind::Batchnorm { features: c3 });
    b.chain("relu7", LayerKind::Relu);
    b.pool("pool7", true);
    b.voxres(8, c3);
    b.voxres(9, c3);
    b
}

/// 3D-ResNet: stem convolutions and six residual blocks (`voxres2` ..
/// `voxres9`) over three pooled stages, then max pool -> FC -> softmax.
pub fn build_resnet3d(profile: ScaleProfile) -> Result<ModelGraph> {
    let mut b = resnet_trunk(profile, false);
    b.pool("pool_head", true);
    let flat = b.tail_flat_len()?;
    let hidden = match profile {
        ScaleProfile::Paper110 => 128,
        ScaleProfile::Desk32 => 32,
    };
    b.chain(
        "fc_head",
        LayerKind::FullyConnected {
            in_features: flat,
            out_features: hidden,
        },
    );
    b.chain(
        "softmax",
        LayerKind::Softmax {
            in_features: hidden,
            classes: 2,
        },
    );
    b.finish(2)
}

/// 3D-ResNet-GAP: identical trunk, head replaced by global average pooling
/// feeding the softmax output layer directly.
pub fn build_resnet3d_gap(profile: ScaleProfile) -> Result<ModelGraph> {
    let mut b = resnet_trunk(profile, false);
    let ch = resnet_channels(profile).2;
    b.chain("gap", LayerKind::GlobalAveragePool);
    b.chain(
        "softmax",
        LayerKind::Softmax {
            in_features: ch,
            classes: 2,
        },
    );
    b.finish(2)
}

/// Truncated 3D-ResNet-GAP: everything from `conv4` through `voxres9_out`
/// removed, leaving the stem and first residual stage, then GAP -> softmax
/// on the higher-resolution grid.
pub fn build_resnet3d_shallow_gap(profile: ScaleProfile) -> Result<ModelGraph> {
    let mut b = resnet_trunk(profile, true);
    let ch = resnet_channels(profile).0;
    b.chain("gap", LayerKind::GlobalAveragePool);
    b.chain(
        "softmax",
        LayerKind::Softmax {
            in_features: ch,
            classes: 2,
        },
    );
    b.finish(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::graph::Shape;

    fn last_conv_dims(g: &ModelGraph) -> Dims {
        let shapes = g.propagate_shapes().unwrap();
        shapes[g.last_conv_index().unwrap()]
            .spatial_dims()
            .unwrap()
    }

    #[test]
    fn vgg_full_profile_last_conv_is_3cubed() {
        let g = build_vgg3d(ScaleProfile::Paper110).unwrap();
        assert_eq!(last_conv_dims(&g), (3, 3, 3));
        assert_eq!(g.classes, 2);
    }

    #[test]
    fn vgg_head_layout() {
        let g = build_vgg3d(ScaleProfile::Paper110).unwrap();
        let tail: Vec<&str> = g.nodes[g.nodes.len() - 5..]
            .iter()
            .map(|n| n.name.as_str())
            .collect();
        assert_eq!(tail, vec!["fc5", "bn5", "dropout5", "fc6", "softmax"]);
    }

    #[test]
    fn vgg_desk_propagates_to_two_logits() {
        let g = build_vgg3d(ScaleProfile::Desk32).unwrap();
        let shapes = g.propagate_shapes().unwrap();
        assert_eq!(*shapes.last().unwrap(), Shape::Vector { len: 2 });
    }

    #[test]
    fn resnet_full_profile_last_conv_is_14cubed() {
        let g = build_resnet3d(ScaleProfile::Paper110).unwrap();
        assert_eq!(last_conv_dims(&g), (14, 14, 14));
        assert_eq!(g.last_conv_name().unwrap(), "voxres9_out");
    }

    #[test]
    fn resnet_has_six_residual_blocks_of_two_convs() {
        let g = build_resnet3d(ScaleProfile::Paper110).unwrap();
        let adds: Vec<&str> = g
            .nodes
            .iter()
            .filter(|n| matches!(n.kind, LayerKind::ResidualAdd))
            .map(|n| n.name.as_str())
            .collect();
        assert_eq!(
            adds,
            vec![
                "voxres2_out",
                "voxres3_out",
                "voxres5_out",
                "voxres6_out",
                "voxres8_out",
                "voxres9_out"
            ]
        );
        for n in [2usize, 3, 5, 6, 8, 9] {
            assert!(g.node_index(&format!("voxres{n}_conv_a")).is_ok());
            assert!(g.node_index(&format!("voxres{n}_bn")).is_ok());
            assert!(g.node_index(&format!("voxres{n}_relu")).is_ok());
            assert!(g.node_index(&format!("voxres{n}_conv_b")).is_ok());
        }
    }

    #[test]
    fn resnet_gap_head_is_exactly_gap_softmax() {
        let g = build_resnet3d_gap(ScaleProfile::Paper110).unwrap();
        assert!(g.is_gap_head());
        let shapes = g.propagate_shapes().unwrap();
        assert_eq!(last_conv_dims(&g), (14, 14, 14));
        // trunk of the GAP model matches the plain ResNet trunk
        let plain = build_resnet3d(ScaleProfile::Paper110).unwrap();
        let trunk_len = g.nodes.len() - 2;
        assert_eq!(&g.nodes[..trunk_len], &plain.nodes[..trunk_len]);
        assert_eq!(*shapes.last().unwrap(), Shape::Vector { len: 2 });
    }

    #[test]
    fn shallow_gap_full_profile_is_55cubed_and_drops_upper_layers() {
        let g = build_resnet3d_shallow_gap(ScaleProfile::Paper110).unwrap();
        assert_eq!(last_conv_dims(&g), (55, 55, 55));
        assert!(g.node_index("conv4").is_err());
        assert!(g.node_index("voxres9_out").is_err());
        assert!(g.node_index("voxres5_conv_a").is_err());
        assert!(g.is_gap_head());
    }

    #[test]
    fn shallow_gap_desk_is_16cubed() {
        // shape-propagation oracle: 32 with a single kernel-2 stride-2
        // pooling stage gives 16, and same-padded convolutions keep it
        let g = build_resnet3d_shallow_gap(ScaleProfile::Desk32).unwrap();
        assert_eq!(last_conv_dims(&g), (16, 16, 16));
    }

    #[test]
    fn skip_connections_join_equal_shapes() {
        let g = build_resnet3d(ScaleProfile::Desk32).unwrap();
        let shapes = g.propagate_shapes().unwrap();
        for (i, n) in g.nodes.iter().enumerate() {
            if matches!(n.kind, LayerKind::ResidualAdd) {
                let a = match n.inputs[0] {
                    PortRef::Node(j) => shapes[j],
                    PortRef::Input => unreachable!(),
                };
                let b = match n.inputs[1] {
                    PortRef::Node(j) => shapes[j],
                    PortRef::Input => unreachable!(),
                };
                assert_eq!(a, b);
                assert_eq!(a, shapes[i]);
            }
        }
    }
}
