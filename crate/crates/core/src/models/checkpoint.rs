use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Episode, Vocab, NEUTRAL_TOKEN};
use crate::error::{NrrError, Result};
use crate::kernel::{Param, Parameterized, RngStream};
use crate::models::{BaselineClassifier, Classifier, ModelConfig, ModelKind, NrrLiteClassifier, TrainConfig};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Either classifier behind one type, for code that picks the model at runtime.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyClassifier {
    Baseline(BaselineClassifier),
    NrrLite(NrrLiteClassifier),
}

impl AnyClassifier {
    pub fn new(kind: ModelKind, vocab: Vocab, config: ModelConfig, rng: &mut RngStream) -> Result<Self> {
        Ok(match kind {
            ModelKind::Baseline => AnyClassifier::Baseline(BaselineClassifier::new(vocab, config, rng)?),
            ModelKind::NrrLite => AnyClassifier::NrrLite(NrrLiteClassifier::new(vocab, config, rng)?),
        })
    }

    pub fn as_nrr(&self) -> Option<&NrrLiteClassifier> {
        match self {
            AnyClassifier::NrrLite(m) => Some(m),
            AnyClassifier::Baseline(_) => None,
        }
    }

    fn inner(&self) -> &dyn Classifier {
        match self {
            AnyClassifier::Baseline(m) => m,
            AnyClassifier::NrrLite(m) => m,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Classifier {
        match self {
            AnyClassifier::Baseline(m) => m,
            AnyClassifier::NrrLite(m) => m,
        }
    }
}

impl Parameterized for AnyClassifier {
    fn params(&self) -> Vec<&Param> {
        match self {
            AnyClassifier::Baseline(m) => m.params(),
            AnyClassifier::NrrLite(m) => m.params(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            AnyClassifier::Baseline(m) => m.params_mut(),
            AnyClassifier::NrrLite(m) => m.params_mut(),
        }
    }
}

impl Classifier for AnyClassifier {
    fn kind(&self) -> ModelKind {
        self.inner().kind()
    }

    fn config(&self) -> &ModelConfig {
        self.inner().config()
    }

    fn vocab(&self) -> &Vocab {
        self.inner().vocab()
    }

    fn predict(&self, e: &Episode) -> Result<Vec<f64>> {
        self.inner().predict(e)
    }

    fn accumulate_gradients(&mut self, e: &Episode, scale: f64) -> Result<f64> {
        self.inner_mut().accumulate_gradients(e, scale)
    }

    fn mask_frozen_gradients(&mut self) {
        self.inner_mut().mask_frozen_gradients()
    }

    fn gate(&self, e: &Episode) -> Result<Option<Vec<f64>>> {
        self.inner().gate(e)
    }
}

/// Serialized model: vocabulary, parameter shapes and flat parameter arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub model: ModelKind,
    pub config: ModelConfig,
    /// Full vocabulary in id order, NEUTRAL first.
    pub vocab: Vec<String>,
    pub ambiguous_token: String,
    pub shapes: Vec<[usize; 2]>,
    pub params: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Checkpoint {
    pub fn capture(model: &AnyClassifier) -> Self {
        let params = model.params();
        Self {
            version: CHECKPOINT_VERSION,
            model: model.kind(),
            config: *model.config(),
            vocab: model.vocab().tokens().to_vec(),
            ambiguous_token: model.vocab().ambiguous_token().to_string(),
            shapes: params.iter().map(|p| [p.value.rows(), p.value.cols()]).collect(),
            params: params.iter().map(|p| p.value.data().to_vec()).collect(),
            train: None,
            seed: None,
        }
    }

    pub fn restore(&self) -> Result<AnyClassifier> {
        if self.version != CHECKPOINT_VERSION {
            return Err(NrrError::Validation(format!(
                "checkpoint version {} (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        if self.vocab.first().map(String::as_str) != Some(NEUTRAL_TOKEN) {
            return Err(NrrError::Validation("vocab must start with NEUTRAL".into()));
        }
        let vocab = Vocab::new(self.vocab[1..].iter().map(String::as_str), &self.ambiguous_token)?;
        if vocab.len() != self.vocab.len() {
            return Err(NrrError::Validation("duplicate vocabulary entries".into()));
        }
        let mut model = AnyClassifier::new(self.model, vocab, self.config, &mut RngStream::new(0))?;
        let expected: Vec<[usize; 2]> = model
            .params()
            .iter()
            .map(|p| [p.value.rows(), p.value.cols()])
            .collect();
        if expected != self.shapes || self.params.len() != self.shapes.len() {
            return Err(NrrError::shape(
                "Checkpoint::restore",
                format!("{expected:?}"),
                format!("{:?}", self.shapes),
            ));
        }
        for (p, values) in model.params_mut().into_iter().zip(&self.params) {
            if values.len() != p.len() || values.iter().any(|v| !v.is_finite()) {
                return Err(NrrError::Validation("parameter array length or value".into()));
            }
            p.value.data_mut().copy_from_slice(values);
        }
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate, neutralize, DatasetSpec};

    #[test]
    fn restore_gives_bit_identical_outputs() {
        let spec = DatasetSpec {
            n: 10,
            ..Default::default()
        };
        let eps = generate(&spec).unwrap();
        for kind in [ModelKind::Baseline, ModelKind::NrrLite] {
            let mut rng = RngStream::new(11);
            let model = AnyClassifier::new(kind, spec.vocab().unwrap(), ModelConfig::default(), &mut rng).unwrap();
            let json = Checkpoint::capture(&model).to_json().unwrap();
            let back = Checkpoint::from_json(&json).unwrap().restore().unwrap();
            assert_eq!(back, model);
            for e in &eps {
                assert_eq!(back.predict(e).unwrap(), model.predict(e).unwrap());
                assert_eq!(
                    back.predict(&neutralize(e)).unwrap(),
                    model.predict(&neutralize(e)).unwrap()
                );
            }
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let vocab = DatasetSpec::default().vocab().unwrap();
        let model = AnyClassifier::new(
            ModelKind::Baseline,
            vocab,
            ModelConfig::default(),
            &mut RngStream::new(0),
        )
        .unwrap();
        let mut ck = Checkpoint::capture(&model);
        ck.config.hidden_dim = 8;
        assert!(ck.restore().is_err());
    }
}
