//! Volumetric network engine: graph description, forward/backward passes,
//! optimizers, training loop, and checkpoint serialization.

pub mod backward;
pub mod builders;
pub mod checkpoint;
pub mod forward;
pub mod graph;
pub mod loss;
pub mod model;
pub mod optim;
pub mod params;
pub mod train;

pub use backward::{backward, BackwardOptions, Grads, OutputSeed};
pub use builders::{build_model, ModelArch, ScaleProfile};
pub use forward::{forward, forward_batch, ActivationCache, BatchCache, Feature, Mode};
pub use graph::{LayerKind, ModelGraph, Node, Padding, PortRef, Shape};
pub use model::Model;
pub use params::{LayerParams, ParamStore};
pub use train::{train, OptimizerKind, TrainConfig, TrainReport, Trainer};
