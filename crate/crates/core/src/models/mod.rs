//! Two classifiers over the two-turn corpus.
//!
//! Both share an embedding table, mean pooling and a two-layer head.
//! [`BaselineClassifier`] keeps one vector per token. [`NrrLiteClassifier`]
//! keeps `k` variant vectors for each designated ambiguous token, runs the
//! head once per variant and mixes the resulting probabilities with a gate
//! computed from the pooled Turn 2 embeddings.

mod baseline;
mod checkpoint;
mod nrr;
mod train;

use serde::{Deserialize, Serialize};

use crate::dataset::{neutralize, Episode, Vocab, NEUTRAL_ID};
use crate::error::{NrrError, Result};
use crate::kernel::{Activation, Mat, MlpShape, Param, Parameterized};

pub use baseline::BaselineClassifier;
pub use checkpoint::{AnyClassifier, Checkpoint, CHECKPOINT_VERSION};
pub use nrr::{InterpretationSet, MultiVectorTable, NrrLiteClassifier};
pub use train::{train, TrainConfig, TrainOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "baseline")]
    Baseline,
    #[serde(rename = "nrr-lite")]
    NrrLite,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Baseline => "baseline",
            ModelKind::NrrLite => "nrr-lite",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = NrrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(ModelKind::Baseline),
            "nrr-lite" | "nrr" => Ok(ModelKind::NrrLite),
            other => Err(NrrError::Config(format!("unknown model `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// Variants per ambiguous token (NRR-lite only).
    pub k: usize,
    /// Half-width of the uniform initialization range.
    pub init_scale: f64,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 32,
            hidden_dim: 32,
            k: 2,
            init_scale: 0.1,
            activation: Activation::Sigmoid,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self, kind: ModelKind) -> Result<()> {
        if self.embed_dim == 0 || self.hidden_dim == 0 {
            return Err(NrrError::Config("dimensions must be positive".into()));
        }
        if kind == ModelKind::NrrLite && self.k < 2 {
            return Err(NrrError::Config(format!("k = {} but NRR-lite needs k ≥ 2", self.k)));
        }
        if !(self.init_scale >= 0.0) {
            return Err(NrrError::Config("init_scale must be non-negative".into()));
        }
        Ok(())
    }

    pub(crate) fn head_shape(&self, classes: usize) -> MlpShape {
        MlpShape {
            input: self.embed_dim,
            hidden: self.hidden_dim,
            output: classes,
            activation: self.activation,
        }
    }
}

/// Common interface of the baseline and NRR-lite classifiers.
pub trait Classifier: Parameterized + Send {
    fn kind(&self) -> ModelKind;
    fn config(&self) -> &ModelConfig;
    fn vocab(&self) -> &Vocab;

    /// Class probabilities for an episode.
    fn predict(&self, e: &Episode) -> Result<Vec<f64>>;

    /// Adds `scale · ∂loss/∂θ` to every gradient, where loss is the
    /// cross-entropy of [`Classifier::predict`] against `e.label`. Returns the
    /// unscaled loss.
    fn accumulate_gradients(&mut self, e: &Episode, scale: f64) -> Result<f64>;

    /// Zeroes gradients of frozen entries before an optimizer step.
    fn mask_frozen_gradients(&mut self);

    /// Gate weights over interpretations, for gated models.
    fn gate(&self, _e: &Episode) -> Result<Option<Vec<f64>>> {
        Ok(None)
    }

    /// Prediction given Turn 1 only.
    fn predict_turn1(&self, e: &Episode) -> Result<Vec<f64>> {
        self.predict(&neutralize(e))
    }
}

pub(crate) fn check_token(vocab_len: usize, id: usize) -> Result<()> {
    if id >= vocab_len {
        Err(NrrError::UnknownToken(format!("#{id}")))
    } else {
        Ok(())
    }
}

/// Embedding table with the NEUTRAL row pinned at zero.
pub(crate) fn init_embeddings(vocab_len: usize, dim: usize, scale: f64, rng: &mut crate::kernel::RngStream) -> Param {
    let mut table = Mat::uniform(vocab_len, dim, -scale, scale, rng);
    table.row_mut(NEUTRAL_ID).fill(0.0);
    Param::new(table)
}
