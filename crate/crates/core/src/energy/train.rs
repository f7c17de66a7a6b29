use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{EnergyError, EnergyModel};
use crate::autodiff::{adam_step, AdamConfig, AdamState};
use crate::rng::{self, tag};
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default)]
    pub seed: u64,
    /// Checkpoint hook period in epochs; the final epoch always triggers it.
    #[serde(default = "default_every")]
    pub checkpoint_every: usize,
}

fn default_lr() -> f64 {
    1e-4
}

fn default_every() -> usize {
    50
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch_size: 128,
            lr: default_lr(),
            seed: 0,
            checkpoint_every: default_every(),
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), EnergyError> {
        if self.batch_size == 0 || self.lr.is_nan() || self.lr <= 0.0 {
            return Err(EnergyError::InvalidRange(format!(
                "batch size must be positive and lr > 0, got {} and {}",
                self.batch_size, self.lr
            )));
        }
        Ok(())
    }
}

/// Optimizer state and bookkeeping carried between epochs.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState<T> {
    pub adam: AdamState<T>,
    /// Number of completed epochs.
    pub epoch: usize,
    /// Mean loss of every mini-batch, in order.
    pub loss_history: Vec<f64>,
}

impl<T: Scalar> TrainState<T> {
    pub fn fresh(model: &EnergyModel<T>) -> Self {
        Self {
            adam: AdamState::new(model.params()),
            epoch: 0,
            loss_history: Vec::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub model: EnergyModel<T>,
    pub state: TrainState<T>,
}

/// Trains from scratch. See [`resume`].
pub fn train<T, F>(
    model: EnergyModel<T>,
    data: &[Vec<f64>],
    cfg: &TrainConfig,
    on_checkpoint: F,
) -> Result<TrainOutcome<T>, EnergyError>
where
    T: Scalar,
    F: FnMut(&EnergyModel<T>, &TrainState<T>) -> Result<(), EnergyError>,
{
    let state = TrainState::fresh(&model);
    resume(model, state, data, cfg, on_checkpoint)
}

/// Runs epochs `state.epoch + 1 ..= cfg.epochs`. Each epoch shuffles the data
/// and takes one Adam step per mini-batch, all randomness drawn from a stream
/// keyed by `(seed, epoch)`, so a resumed run matches an uninterrupted one.
pub fn resume<T, F>(
    mut model: EnergyModel<T>,
    mut state: TrainState<T>,
    data: &[Vec<f64>],
    cfg: &TrainConfig,
    mut on_checkpoint: F,
) -> Result<TrainOutcome<T>, EnergyError>
where
    T: Scalar,
    F: FnMut(&EnergyModel<T>, &TrainState<T>) -> Result<(), EnergyError>,
{
    cfg.validate()?;
    if data.is_empty() {
        return Err(EnergyError::EmptyBatch);
    }
    let adam = cfg.adam();
    for epoch in state.epoch + 1..=cfg.epochs {
        let mut rng = rng::stream(cfg.seed, &[tag::TRAIN, epoch as u64]);
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng);
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&[f64]> = idx.iter().map(|&i| data[i].as_slice()).collect();
            let (loss, grads) = model.loss_ebm(&batch, &mut rng)?;
            if !loss.is_finite() {
                return Err(EnergyError::NonFinite {
                    epoch,
                    batch: b,
                    loss,
                });
            }
            let step = state.adam.step + 1;
            let next = adam_step(model.params(), &grads, &mut state.adam, &adam, step)?;
            model.set_params(next)?;
            state.loss_history.push(loss);
        }
        state.epoch = epoch;
        if epoch == cfg.epochs || (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0) {
            on_checkpoint(&model, &state)?;
        }
    }
    Ok(TrainOutcome { model, state })
}
