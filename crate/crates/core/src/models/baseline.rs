use crate::dataset::{Episode, Label, Vocab, NEUTRAL_ID};
use crate::error::Result;
use crate::kernel::{
    axpy, cross_entropy, softmax, softmax_cross_entropy_backward, Mat, Mlp, Param, Parameterized, RngStream,
};
use crate::models::{check_token, Classifier, ModelConfig, ModelKind};

/// One embedding per token, mean-pooled over both turns, then a two-layer head.
///
/// NEUTRAL is an ordinary row here: it never occurs in training data, and its
/// gradient is masked so it stays at its initial value.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineClassifier {
    pub(crate) config: ModelConfig,
    pub(crate) vocab: Vocab,
    pub embed: Param,
    pub head: Mlp,
}

impl BaselineClassifier {
    pub fn new(vocab: Vocab, config: ModelConfig, rng: &mut RngStream) -> Result<Self> {
        config.validate(ModelKind::Baseline)?;
        let scale = config.init_scale;
        let embed = Param::new(Mat::uniform(vocab.len(), config.embed_dim, -scale, scale, rng));
        let head = Mlp::uniform(config.head_shape(Label::COUNT), config.init_scale, rng);
        Ok(Self {
            config,
            vocab,
            embed,
            head,
        })
    }

    pub fn zero_head(&mut self) {
        self.head = Mlp::zeros(self.head.shape);
    }

    fn tokens<'a>(e: &'a Episode) -> impl Iterator<Item = usize> + 'a {
        e.turn1.iter().chain(&e.turn2).copied()
    }

    /// Mean of all token embeddings over `turn1 ++ turn2`.
    pub fn encode(&self, e: &Episode) -> Result<Vec<f64>> {
        let mut enc = vec![0.0; self.config.embed_dim];
        let mut n = 0usize;
        for id in Self::tokens(e) {
            check_token(self.vocab.len(), id)?;
            axpy(1.0, self.embed.value.row(id), &mut enc);
            n += 1;
        }
        let inv = 1.0 / n as f64;
        enc.iter_mut().for_each(|v| *v *= inv);
        Ok(enc)
    }
}

impl Parameterized for BaselineClassifier {
    fn params(&self) -> Vec<&Param> {
        let mut p = vec![&self.embed];
        p.extend(self.head.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = vec![&mut self.embed];
        p.extend(self.head.params_mut());
        p
    }
}

impl Classifier for BaselineClassifier {
    fn kind(&self) -> ModelKind {
        ModelKind::Baseline
    }

    fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn predict(&self, e: &Episode) -> Result<Vec<f64>> {
        let trace = self.head.forward(&self.encode(e)?)?;
        Ok(softmax(&trace.logits))
    }

    fn accumulate_gradients(&mut self, e: &Episode, scale: f64) -> Result<f64> {
        let enc = self.encode(e)?;
        let trace = self.head.forward(&enc)?;
        let p = softmax(&trace.logits);
        let gold = e.label.index();
        let loss = cross_entropy(&p, gold)?;

        let mut dz = softmax_cross_entropy_backward(&p, gold)?;
        dz.iter_mut().for_each(|g| *g *= scale);
        let d_enc = self.head.backward(&trace, &dz)?;

        let n = e.turn1.len() + e.turn2.len();
        let share = 1.0 / n as f64;
        for id in Self::tokens(e) {
            axpy(share, &d_enc, self.embed.grad.row_mut(id));
        }
        Ok(loss)
    }

    fn mask_frozen_gradients(&mut self) {
        self.embed.grad.row_mut(NEUTRAL_ID).fill(0.0);
    }
}
