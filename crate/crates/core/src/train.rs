//! Mini-batch Adam training on exact simulation.

use serde::{Deserialize, Serialize};

use crate::data::{batches, Dataset};
use crate::grad::{backprop_gradients_under, AdamState};
use crate::loss::LossBreakdown;
use crate::model::Model;
use crate::noise::NoiseModel;
use crate::{rng, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 128,
            learning_rate: AdamState::DEFAULT_LR,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("train.epochs must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!(
                "train.learning_rate = {} must be positive",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Full-dataset losses after one epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub ce: f64,
    pub ps: f64,
    pub entropy: f64,
    pub total: f64,
    /// Total loss on the test split; NaN without one.
    pub test_loss: f64,
}

impl EpochRecord {
    fn new(epoch: usize, train: LossBreakdown, test_loss: f64) -> Self {
        Self {
            epoch,
            ce: train.ce,
            ps: train.ps,
            entropy: train.entropy,
            total: train.total,
            test_loss,
        }
    }
}

/// Train `model` in place; `seed` fixes the batch order. Returns the
/// per-epoch loss trace.
pub fn train(
    model: &mut Model,
    train_set: &Dataset,
    test_set: Option<&Dataset>,
    cfg: &TrainConfig,
    noise: &NoiseModel,
    seed: u64,
) -> Result<Vec<EpochRecord>> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::argument("training set is empty"));
    }
    if train_set.dim() != model.spec().input_dim {
        return Err(Error::config(format!(
            "dataset dimension {} differs from model input_dim {}",
            train_set.dim(),
            model.spec().input_dim
        )));
    }
    let mut opt = AdamState::new(model.param_count(), cfg.learning_rate);
    let mut params = model.params();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let order = batches(train_set.len(), cfg.batch_size, rng::derive(seed, &[epoch as u64]))?;
        for idx in order {
            let grads = backprop_gradients_under(model, &train_set.batch(&idx), noise)?;
            opt.step(&mut params, &grads.flat())?;
            model.set_params(&params)?;
        }
        let train_loss = model.batch_loss(&train_set.all())?;
        let test_loss = match test_set {
            Some(t) if !t.is_empty() => model.batch_loss(&t.all())?.total,
            _ => f64::NAN,
        };
        history.push(EpochRecord::new(epoch + 1, train_loss, test_loss));
    }
    Ok(history)
}
