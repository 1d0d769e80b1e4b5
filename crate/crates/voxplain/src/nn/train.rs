use super::backward::{backward, BackwardOptions};
use super::builders::ModelArch;
use super::forward::{forward_batch, Aux, Feature, Mode, BN_MOMENTUM};
use super::graph::LayerKind;
use super::loss::{cross_entropy, cross_entropy_logit_grads};
use super::model::Model;
use super::optim::{AdamState, NesterovState};
use super::params::LayerParams;
use crate::error::{Error, Result};
use crate::tensor::Volume;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Adam,
    Nesterov,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Guarantee at least one sample of each class per batch.
    pub balanced_batches: bool,
}

impl TrainConfig {
    /// Adam schedule used for the VGG-style model.
    pub fn vgg_default() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::Adam,
            lr: 27e-6,
            batch_size: 5,
            epochs: 150,
            seed: 0,
            balanced_batches: true,
        }
    }

    /// Nesterov schedule used for the residual models.
    pub fn resnet_default() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::Nesterov,
            lr: 1e-3,
            batch_size: 3,
            epochs: 150,
            seed: 0,
            balanced_batches: true,
        }
    }

    pub fn for_arch(arch: ModelArch) -> Self {
        match arch {
            ModelArch::Vgg3d => Self::vgg_default(),
            _ => Self::resnet_default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean cross-entropy per epoch, in epoch order.
    pub epoch_losses: Vec<f64>,
    pub epochs_run: usize,
}

enum OptimState {
    Adam(AdamState),
    Nesterov(NesterovState),
}

/// Incremental trainer so callers can run epochs in chunks (for early
/// stopping) without losing optimizer state.
pub struct Trainer {
    cfg: TrainConfig,
    state: OptimState,
    rng: ChaCha8Rng,
    pub epoch_losses: Vec<f64>,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, model: &Model) -> Self {
        let state = match cfg.optimizer {
            OptimizerKind::Adam => OptimState::Adam(AdamState::new(&model.params)),
            OptimizerKind::Nesterov => OptimState::Nesterov(NesterovState::new(&model.params)),
        };
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Trainer {
            cfg,
            state,
            rng,
            epoch_losses: Vec::new(),
        }
    }

    /// Runs `epochs` epochs over the labeled volumes, returning the mean
    /// loss of each.
    pub fn run_epochs(
        &mut self,
        model: &mut Model,
        data: &[(&Volume, usize)],
        epochs: usize,
    ) -> Result<Vec<f64>> {
        if data.is_empty() {
            return Err(Error::InvalidArgument("empty training set".into()));
        }
        let classes = model.graph.classes;
        for (_, label) in data {
            if *label >= classes {
                return Err(Error::InvalidArgument(format!(
                    "label {label} out of range for {classes} classes"
                )));
            }
        }
        let mut losses = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            let batches = self.make_batches(data, classes)?;
            let mut epoch_loss = 0.0f64;
            let mut n_batches = 0usize;
            for batch in batches {
                let vols: Vec<&Volume> = batch.iter().map(|&i| data[i].0).collect();
                let targets: Vec<usize> = batch.iter().map(|&i| data[i].1).collect();
                let input = Feature::from_volumes(&vols)?;

                // classical Nesterov evaluates gradients at the lookahead
                // point; Adam at the current parameters
                let eval_params = match &self.state {
                    OptimState::Nesterov(s) => s.lookahead(&model.params),
                    OptimState::Adam(_) => model.params.clone(),
                };
                let cache = forward_batch(
                    &model.graph,
                    &eval_params,
                    &input,
                    Mode::Train { rng: &mut self.rng },
                )?;
                let loss = cross_entropy(&cache.probs, classes, &targets)?;
                let lg = cross_entropy_logit_grads(&cache.probs, classes, &targets);
                let grads = backward(
                    &model.graph,
                    &eval_params,
                    &input,
                    &cache,
                    &BackwardOptions::for_training(lg),
                )?;

                match &mut self.state {
                    OptimState::Adam(s) => s.step(&mut model.params, &grads.params, self.cfg.lr)?,
                    OptimState::Nesterov(s) => {
                        s.step(&mut model.params, &grads.params, self.cfg.lr)?
                    }
                }
                update_running_stats(model, &cache.aux)?;
                epoch_loss += loss;
                n_batches += 1;
            }
            losses.push(epoch_loss / n_batches as f64);
        }
        self.epoch_losses.extend_from_slice(&losses);
        Ok(losses)
    }

    /// Shuffled batch index lists for one epoch. With balancing on, the
    /// batch count is capped by the rarest class so every batch sees at
    /// least one sample of each class.
    fn make_batches(&mut self, data: &[(&Volume, usize)], classes: usize) -> Result<Vec<Vec<usize>>> {
        let n = data.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut self.rng);
        let want = (n + self.cfg.batch_size - 1) / self.cfg.batch_size;
        if !self.cfg.balanced_batches {
            return Ok(order.chunks(self.cfg.batch_size).map(<[usize]>::to_vec).collect());
        }
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
        for &i in &order {
            by_class[data[i].1].push(i);
        }
        let rarest = by_class.iter().map(Vec::len).min().unwrap_or(0);
        if rarest == 0 {
            return Err(Error::BalanceError(
                "a class has no samples in the training set".into(),
            ));
        }
        let n_batches = want.min(rarest).max(1);
        let mut batches: Vec<Vec<usize>> = vec![Vec::new(); n_batches];
        let mut cursor = 0usize;
        for class_items in by_class {
            for i in class_items {
                batches[cursor % n_batches].push(i);
                cursor += 1;
            }
        }
        Ok(batches)
    }
}

/// Folds the batch statistics captured during the forward pass into the
/// model's running mean/variance with the usual exponential update.
fn update_running_stats(model: &mut Model, aux: &[Aux]) -> Result<()> {
    for (idx, a) in aux.iter().enumerate() {
        if let Aux::Bn { mean, var } = a {
            if !matches!(model.graph.nodes[idx].kind, LayerKind::Batchnorm { .. }) {
                continue;
            }
            if let LayerParams::Bn {
                running_mean,
                running_var,
                ..
            } = &mut model.params.layers[idx]
            {
                for (rm, &m) in running_mean.iter_mut().zip(mean) {
                    *rm = (1.0 - BN_MOMENTUM) * *rm + BN_MOMENTUM * m;
                }
                for (rv, &v) in running_var.iter_mut().zip(var) {
                    *rv = (1.0 - BN_MOMENTUM) * *rv + BN_MOMENTUM * v;
                }
            }
        }
    }
    Ok(())
}

/// One-shot training entry point.
pub fn train(
    model: &mut Model,
    data: &[(&Volume, usize)],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    let mut trainer = Trainer::new(cfg.clone(), model);
    let losses = trainer.run_epochs(model, data, cfg.epochs)?;
    Ok(TrainReport {
        epochs_run: losses.len(),
        epoch_losses: losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::builders::{build_model, ScaleProfile};
    use crate::nn::params::ParamStore;
        use rand::Rng;

    fn blob_volume(dims: (usize, usize, usize), seed: u64, offset: f32) -> Volume {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f32> = (0..dims.0 * dims.1 * dims.2)
            .map(|_| rng.gen::<f32>() - 0.5 + offset)
            .collect();
        Volume::new(dims, data).unwrap()
    }

    fn toy_set(dims: (usize, usize, usize)) -> Vec<(Volume, usize)> {
        // class 1 volumes carry a constant intensity offset
        (0..8)
            .map(|i| {
                let label = i % 2;
                (blob_volume(dims, 100 + i as u64, label as f32 * 1.5), label)
            })
            .collect()
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let graph = build_model(ModelArch::Resnet3dShallowGap, ScaleProfile::Desk32).unwrap();
        let dims = graph.input_dims;
        let set = toy_set(dims);
        let data: Vec<(&Volume, usize)> = set.iter().map(|(v, l)| (v, *l)).collect();
        let mut cfg = TrainConfig::resnet_default();
        cfg.epochs = 2;
        cfg.seed = 9;

        let run = |cfg: &TrainConfig| {
            let mut m = Model::new(graph.clone(), ParamStore::init(&graph, 5));
            let rep = train(&mut m, &data, cfg).unwrap();
            (rep.epoch_losses, m.params)
        };
        let (l1, p1) = run(&cfg);
        let (l2, p2) = run(&cfg);
        assert_eq!(l1, l2);
        assert_eq!(p1, p2);
        let mut cfg2 = cfg.clone();
        cfg2.seed = 10;
        let (l3, _) = run(&cfg2);
        assert_ne!(l1, l3);
    }

    #[test]
    fn loss_decreases_on_separable_toy_data() {
        let graph = build_model(ModelArch::Resnet3dShallowGap, ScaleProfile::Desk32).unwrap();
        let dims = graph.input_dims;
        let set = toy_set(dims);
        let data: Vec<(&Volume, usize)> = set.iter().map(|(v, l)| (v, *l)).collect();
        let mut model = Model::new(graph.clone(), ParamStore::init(&graph, 3));
        let mut cfg = TrainConfig::resnet_default();
        cfg.epochs = 8;
        cfg.seed = 4;
        let rep = train(&mut model, &data, &cfg).unwrap();
        let first = rep.epoch_losses.first().copied().unwrap();
        let last = rep.epoch_losses.last().copied().unwrap();
        assert!(
            last < first,
            "loss did not decrease: {first} -> {last} ({:?})",
            rep.epoch_losses
        );
    }

    #[test]
    fn balanced_batches_contain_every_class() {
        let graph = build_model(ModelArch::Resnet3dShallowGap, ScaleProfile::Desk32).unwrap();
        let dims = graph.input_dims;
        // skewed: 6 of class 0, 2 of class 1
        let set: Vec<(Volume, usize)> = (0..8)
            .map(|i| {
                let label = usize::from(i >= 6);
                (blob_volume(dims, i as u64, label as f32), label)
            })
            .collect();
        let data: Vec<(&Volume, usize)> = set.iter().map(|(v, l)| (v, *l)).collect();
        let model = Model::new(graph.clone(), ParamStore::init(&graph, 0));
        let mut cfg = TrainConfig::resnet_default();
        cfg.batch_size = 3;
        let mut trainer = Trainer::new(cfg, &model);
        for _ in 0..5 {
            let batches = trainer.make_batches(&data, 2).unwrap();
            for b in &batches {
                let has0 = b.iter().any(|&i| data[i].1 == 0);
                let has1 = b.iter().any(|&i| data[i].1 == 1);
                assert!(has0 && has1, "unbalanced batch {b:?}");
            }
            let total: usize = batches.iter().map(Vec::len).sum();
            assert_eq!(total, data.len());
        }
    }

    #[test]
    fn single_class_data_is_rejected_when_balancing() {
        let graph = build_model(ModelArch::Resnet3dShallowGap, ScaleProfile::Desk32).unwrap();
        let dims = graph.input_dims;
        let set: Vec<(Volume, usize)> =
            (0..4).map(|i| (blob_volume(dims, i as u64, 0.0), 0)).collect();
        let data: Vec<(&Volume, usize)> = set.iter().map(|(v, l)| (v, *l)).collect();
        let mut model = Model::new(graph.clone(), ParamStore::init(&graph, 0));
        let mut cfg = TrainConfig::resnet_default();
        cfg.epochs = 1;
        assert!(matches!(
            train(&mut model, &data, &cfg),
            Err(Error::BalanceError(_))
        ));
    }
}
