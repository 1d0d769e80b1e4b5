use super::builders::{build_model, ModelArch, ScaleProfile};
use super::forward::{forward_batch, ActivationCache, BatchCache, Feature, Mode};
use super::graph::ModelGraph;
use super::params::ParamStore;
use crate::error::Result;
use crate::tensor::Volume;
use std::sync::atomic::{AtomicU64, Ordering};

/// A graph plus its parameters, with an instrumented forward-pass counter
/// used to verify attribution cost accounting.
#[derive(Debug)]
pub struct Model {
    pub graph: ModelGraph,
    pub params: ParamStore,
    passes: AtomicU64,
}

impl Clone for Model {
    fn clone(&self) -> Self {
        Model {
            graph: self.graph.clone(),
            params: self.params.clone(),
            passes: AtomicU64::new(self.passes.load(Ordering::Relaxed)),
        }
    }
}

impl Model {
    pub fn new(graph: ModelGraph, params: ParamStore) -> Self {
        Model {
            graph,
            params,
            passes: AtomicU64::new(0),
        }
    }

    /// Freshly initialized model for an architecture and scale profile.
    pub fn from_arch(arch: ModelArch, profile: ScaleProfile, seed: u64) -> Result<Self> {
        let graph = build_model(arch, profile)?;
        let params = ParamStore::init(&graph, seed);
        Ok(Model::new(graph, params))
    }

    /// Inference pass over one volume; counts one forward pass.
    pub fn predict(&self, v: &Volume) -> Result<ActivationCache> {
        self.passes.fetch_add(1, Ordering::Relaxed);
        super::forward::forward(&self.graph, &self.params, v, Mode::Eval)
    }

    /// Batched forward pass; counts one pass per sample.
    pub fn run_batch(&self, input: &Feature, mode: Mode<'_>) -> Result<BatchCache> {
        self.passes.fetch_add(input.batch as u64, Ordering::Relaxed);
        forward_batch(&self.graph, &self.params, input, mode)
    }

    /// Forward passes executed since construction or the last reset.
    pub fn pass_count(&self) -> u64 {
        self.passes.load(Ordering::Relaxed)
    }

    pub fn reset_pass_count(&self) {
        self.passes.store(0, Ordering::Relaxed);
    }
}
