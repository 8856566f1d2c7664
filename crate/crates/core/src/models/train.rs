use serde::{Deserialize, Serialize};

use crate::dataset::Episode;
use crate::error::{NrrError, Result};
use crate::kernel::{Optimizer, OptimizerConfig, RngStream};
use crate::models::Classifier;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 1,
            optimizer: OptimizerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Mean training loss of each epoch.
    pub epoch_loss: Vec<f64>,
    pub steps: u64,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> f64 {
        self.epoch_loss.last().copied().unwrap_or(f64::NAN)
    }
}

/// Minibatch training on the mean cross-entropy, shuffling with `rng` each
/// epoch.
pub fn train<M: Classifier + ?Sized>(
    model: &mut M,
    episodes: &[Episode],
    config: &TrainConfig,
    rng: &mut RngStream,
) -> Result<TrainOutcome> {
    if episodes.is_empty() {
        return Err(NrrError::Validation("empty training set".into()));
    }
    if config.batch_size == 0 || config.epochs == 0 {
        return Err(NrrError::Config("epochs and batch_size must be positive".into()));
    }
    let mut optimizer = Optimizer::new(config.optimizer)?;
    let mut order: Vec<usize> = (0..episodes.len()).collect();
    let mut epoch_loss = Vec::with_capacity(config.epochs);
    model.zero_grads();

    for epoch in 0..config.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for (batch_no, batch) in order.chunks(config.batch_size).enumerate() {
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let loss = model.accumulate_gradients(&episodes[i], scale)?;
                if !loss.is_finite() {
                    return Err(NrrError::NonFinite(format!(
                        "loss {loss} at epoch {epoch}, batch {batch_no}, episode {i}"
                    )));
                }
                total += loss;
            }
            model.mask_frozen_gradients();
            optimizer
                .step(model.params_mut())
                .map_err(|e| NrrError::NonFinite(format!("epoch {epoch}, batch {batch_no}: {e}")))?;
        }
        epoch_loss.push(total / episodes.len() as f64);
    }
    Ok(TrainOutcome {
        epoch_loss,
        steps: optimizer.steps_taken(),
    })
}
