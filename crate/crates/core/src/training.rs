//! RMSprop over the outlet L1 loss, epoch loop and best-on-validation
//! selection.

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{NormalizationConstants, Snapshot};
use crate::error::{Error, Result};
use crate::graph::{BoundLaplacian, ScaledLaplacian};
use crate::models::{save_checkpoint, Model, ModelCheckpoint, TrainingMetadata};
use crate::params::{ParamBinder, Parameterized};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// Written every time validation loss strictly improves.
    pub checkpoint_path: Option<PathBuf>,
    /// Rescale the averaged batch gradient to at most this global L2 norm.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            alpha: 0.99,
            epsilon: 1e-8,
            batch_size: 32,
            max_epochs: 50,
            seed: 0,
            checkpoint_path: None,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && self.alpha > 0.0
            && self.alpha < 1.0
            && self.epsilon > 0.0
            && self.batch_size >= 1
            && self.clip_norm.map_or(true, |c| c > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid training config {self:?}")))
        }
    }
}

/// Running mean-square of each parameter's gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub square_avg: Vec<Tensor>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(model: &impl Parameterized) -> Self {
        OptimizerState {
            square_avg: model
                .named_params()
                .into_iter()
                .map(|(_, t)| Tensor::zeros(t.shape().to_vec()))
                .collect(),
            step: 0,
        }
    }
}

/// `v ← α·v + (1−α)·g²; p ← p − lr·g/(√v + ε)` for every parameter.
///
/// `grads[i]` belongs to the i-th entry of `named_params_mut`; `None` is a
/// missing gradient.
pub fn rmsprop_step(
    params: &mut impl Parameterized,
    grads: &[Option<Tensor>],
    state: &mut OptimizerState,
    config: &TrainConfig,
) -> Result<()> {
    let mut params = params.named_params_mut();
    if params.len() != grads.len() || params.len() != state.square_avg.len() {
        return Err(Error::InvalidArgument(format!(
            "rmsprop: {} parameters, {} gradients, {} accumulators",
            params.len(),
            grads.len(),
            state.square_avg.len()
        )));
    }
    for (((name, p), g), v) in params.iter_mut().zip(grads).zip(&state.square_avg) {
        let g = g
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("rmsprop: missing gradient for `{name}`")))?;
        if g.shape() != p.shape() || v.shape() != p.shape() {
            return Err(Error::shape("rmsprop_step", p.shape(), g.shape()));
        }
    }
    let (lr, a, eps) = (config.learning_rate, config.alpha, config.epsilon);
    for (((_, p), g), v) in params.iter_mut().zip(grads).zip(state.square_avg.iter_mut()) {
        let g = g.as_ref().expect("checked above");
        for ((p, &g), v) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *v = a * *v + (1.0 - a) * g * g;
            *p -= lr * g / (v.sqrt() + eps);
        }
    }
    state.step += 1;
    Ok(())
}

/// Mean absolute error over the outlet row of `N×T_out` predictions; other
/// rows do not contribute.
pub fn masked_outlet_loss<'t>(pred: Var<'t>, target: Var<'t>, outlet: usize) -> Result<Var<'t>> {
    let (p, t) = (pred.shape(), target.shape());
    if p.len() != 2 || p != t {
        return Err(Error::shape("masked_outlet_loss", &p, &t));
    }
    if outlet >= p[0] {
        return Err(Error::OutOfRange(format!(
            "outlet index {outlet} with {} prediction rows",
            p[0]
        )));
    }
    pred.slice(0, outlet, outlet + 1)?
        .l1_loss(target.slice(0, outlet, outlet + 1)?)
}

/// Everything the loop needs besides the model.
#[derive(Clone, Copy)]
pub struct TrainingData<'a> {
    pub train: &'a [Snapshot],
    pub validation: &'a [Snapshot],
    pub laplacian: &'a ScaledLaplacian,
    pub outlet: usize,
    pub normalization: NormalizationConstants,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
    pub saved: bool,
}

impl EpochRecord {
    /// `epoch,<n>,train_loss,<v>,val_loss,<v>,saved,<bool>`
    pub fn log_line(&self) -> String {
        format!(
            "epoch,{},train_loss,{},val_loss,{},saved,{}",
            self.epoch, self.train_loss, self.validation_loss, self.saved
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: ModelCheckpoint,
    pub history: Vec<EpochRecord>,
}

/// Outlet loss of one snapshot on `tape`.
pub fn snapshot_loss<'t>(
    model: &Model,
    binder: &mut ParamBinder<'t>,
    lap: &BoundLaplacian<'t>,
    snapshot: &Snapshot,
    outlet: usize,
) -> Result<Var<'t>> {
    let tape = binder.tape();
    let input = tape.constant(snapshot.input.clone());
    let target = tape.constant(snapshot.target.clone());
    match model {
        Model::StreamGConvGru(m) => {
            let pred = m.bind(binder)?.forward(input, lap)?;
            masked_outlet_loss(pred, target, outlet)
        }
        Model::ConvBiGru(m) => {
            let pred = m.bind(binder)?.forward(input)?;
            let t_out = pred.shape()[0];
            pred.l1_loss(target.slice(0, outlet, outlet + 1)?.reshape(vec![t_out])?)
        }
    }
}

/// Loss and parameter gradients (in `named_params` order) for one snapshot.
pub fn snapshot_gradients(
    model: &Model,
    laplacian: &ScaledLaplacian,
    snapshot: &Snapshot,
    outlet: usize,
) -> Result<(f64, Vec<Tensor>)> {
    let tape = Tape::new();
    let mut binder = ParamBinder::new(&tape, true);
    let lap = laplacian.bind(&tape);
    let loss = snapshot_loss(model, &mut binder, &lap, snapshot, outlet)?;
    let grads = tape.backward(loss)?;
    let value = loss.value().item()?;
    Ok((value, binder.leaves().iter().map(|&v| grads.get_or_zeros(v)).collect()))
}

/// Average of per-snapshot gradients, accumulated in slice order.
pub fn batch_gradients(
    model: &Model,
    laplacian: &ScaledLaplacian,
    batch: &[&Snapshot],
    outlet: usize,
) -> Result<(Vec<f64>, Vec<Tensor>)> {
    let mut losses = Vec::with_capacity(batch.len());
    let mut sum: Option<Vec<Tensor>> = None;
    for snap in batch {
        let (loss, grads) = snapshot_gradients(model, laplacian, snap, outlet)?;
        losses.push(loss);
        match sum.as_mut() {
            None => sum = Some(grads),
            Some(acc) => {
                for (a, g) in acc.iter_mut().zip(&grads) {
                    for (a, g) in a.data_mut().iter_mut().zip(g.data()) {
                        *a += g;
                    }
                }
            }
        }
    }
    let mut grads = sum.ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
    let scale = 1.0 / batch.len() as f64;
    for g in &mut grads {
        g.data_mut().iter_mut().for_each(|v| *v *= scale);
    }
    Ok((losses, grads))
}

/// Mean outlet loss over `snapshots` without touching parameters.
pub fn evaluate_loss(
    model: &Model,
    laplacian: &ScaledLaplacian,
    snapshots: &[Snapshot],
    outlet: usize,
) -> Result<f64> {
    if snapshots.is_empty() {
        return Err(Error::Dataset("cannot evaluate loss on an empty split".into()));
    }
    let mut tape = Tape::new();
    let mut total = 0.0;
    for snap in snapshots {
        tape.reset();
        let mut binder = ParamBinder::new(&tape, false);
        let lap = laplacian.bind(&tape);
        total += snapshot_loss(model, &mut binder, &lap, snap, outlet)?.value().item()?;
    }
    Ok(total / snapshots.len() as f64)
}

/// Epoch-`epoch` visiting order of `n` training snapshots; a pure function
/// of `(seed, epoch)`.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

fn clip_gradients(grads: &mut [Tensor], max_norm: f64) {
    let norm = grads
        .iter()
        .flat_map(|g| g.data())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
}

/// Trains `model` and returns the weights with the lowest validation loss
/// (the earliest on ties). `on_epoch` sees every epoch record as it happens.
pub fn train(
    mut model: Model,
    data: TrainingData<'_>,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    if data.train.is_empty() {
        return Err(Error::Dataset("training split is empty".into()));
    }
    if data.validation.is_empty() {
        return Err(Error::Dataset("validation split is empty".into()));
    }
    if let Model::StreamGConvGru(m) = &model {
        m.check_laplacian(data.laplacian)?;
    }
    let mut state = OptimizerState::new(&model);
    let mut best: Option<ModelCheckpoint> = None;
    let mut history = Vec::with_capacity(config.max_epochs);

    for epoch in 1..=config.max_epochs {
        let order = epoch_order(data.train.len(), config.seed, epoch);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&Snapshot> = chunk.iter().map(|&i| &data.train[i]).collect();
            let (losses, mut grads) = batch_gradients(&model, data.laplacian, &batch, data.outlet)?;
            let finite = losses.iter().all(|l| l.is_finite())
                && grads.iter().all(|g| g.is_finite());
            if !finite {
                return Err(Error::NonFiniteLoss { epoch, batch: b + 1 });
            }
            loss_sum += losses.iter().sum::<f64>();
            if let Some(c) = config.clip_norm {
                clip_gradients(&mut grads, c);
            }
            let grads: Vec<Option<Tensor>> = grads.into_iter().map(Some).collect();
            rmsprop_step(&mut model, &grads, &mut state, config)?;
        }
        let train_loss = loss_sum / data.train.len() as f64;
        let validation_loss = evaluate_loss(&model, data.laplacian, data.validation, data.outlet)?;
        if !validation_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: 0 });
        }
        let saved = best
            .as_ref()
            .map_or(true, |b| validation_loss < b.training.validation_loss);
        if saved {
            let ckpt = ModelCheckpoint {
                model: model.clone(),
                num_nodes: data.laplacian.num_nodes(),
                normalization: data.normalization,
                graph_fingerprint: data.laplacian.graph_fingerprint().to_string(),
                training: TrainingMetadata {
                    seed: config.seed,
                    epoch,
                    train_loss,
                    validation_loss,
                },
            };
            if let Some(path) = &config.checkpoint_path {
                save_checkpoint(path, &ckpt)?;
            }
            best = Some(ckpt);
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            validation_loss,
            saved,
        };
        log::info!("{}", record.log_line());
        on_epoch(&record);
        history.push(record);
    }
    let best = best.ok_or_else(|| Error::InvalidArgument("max_epochs must be at least 1".into()))?;
    Ok(TrainOutcome { best, history })
}
