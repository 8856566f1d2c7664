use serde::{Deserialize, Serialize};

use crate::dataset::{Episode, Label, Vocab, NEUTRAL_ID};
use crate::error::{NrrError, Result};
use crate::kernel::{
    axpy, cross_entropy, cross_entropy_backward, softmax, softmax_backward, Mat, Mlp, MlpTrace, Param, Parameterized,
    RngStream,
};
use crate::models::{check_token, init_embeddings, Classifier, ModelConfig, ModelKind};

/// Token embeddings where designated ambiguous tokens carry `k` variant
/// vectors instead of one.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiVectorTable {
    /// One row per vocabulary entry. Rows of designated tokens are unused.
    pub base: Param,
    /// `(token id, k × d variant matrix)` per designated token.
    pub variants: Vec<(usize, Param)>,
}

impl MultiVectorTable {
    pub fn new(
        vocab_len: usize,
        dim: usize,
        designated: &[usize],
        k: usize,
        scale: f64,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if k < 2 {
            return Err(NrrError::Config(format!("k = {k}; need at least 2 variants")));
        }
        let mut base = init_embeddings(vocab_len, dim, scale, rng);
        let mut variants = Vec::with_capacity(designated.len());
        for &id in designated {
            check_token(vocab_len, id)?;
            if id == NEUTRAL_ID {
                return Err(NrrError::Config("NEUTRAL cannot be ambiguous".into()));
            }
            base.value.row_mut(id).fill(0.0);
            // each variant row is its own draw
            variants.push((id, Param::new(Mat::uniform(k, dim, -scale, scale, rng))));
        }
        Ok(Self { base, variants })
    }

    pub fn k(&self) -> usize {
        self.variants.first().map_or(0, |(_, p)| p.value.rows())
    }

    pub fn dim(&self) -> usize {
        self.base.value.cols()
    }

    pub fn variant_slot(&self, token: usize) -> Option<usize> {
        self.variants.iter().position(|(id, _)| *id == token)
    }

    /// The `k` variant vectors of a designated token.
    pub fn variant_vectors(&self, token: usize) -> Option<Vec<Vec<f64>>> {
        let slot = self.variant_slot(token)?;
        let m = &self.variants[slot].1.value;
        Some((0..m.rows()).map(|r| m.row(r).to_vec()).collect())
    }
}

/// Everything one NRR-lite forward pass produces for an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpretationSet {
    /// Pooled encoding under each variant of the ambiguous token.
    pub variants: Vec<Vec<f64>>,
    pub gate: Vec<f64>,
    pub per_variant_probs: Vec<Vec<f64>>,
    /// `Σᵢ gateᵢ · per_variant_probsᵢ`
    pub fused_probs: Vec<f64>,
}

impl InterpretationSet {
    pub fn k(&self) -> usize {
        self.gate.len()
    }
}

struct NrrTrace {
    slot: usize,
    context_ids: Vec<usize>,
    turn2_ids: Vec<usize>,
    pooled_turn2: Vec<f64>,
    heads: Vec<MlpTrace>,
    set: InterpretationSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NrrLiteClassifier {
    pub(crate) config: ModelConfig,
    pub(crate) vocab: Vocab,
    pub table: MultiVectorTable,
    /// Bias-free `k × d` map from pooled Turn 2 to gate logits.
    pub gate: Param,
    /// Shared across variants.
    pub head: Mlp,
}

impl NrrLiteClassifier {
    /// Model whose only designated ambiguous token is the vocabulary's.
    pub fn new(vocab: Vocab, config: ModelConfig, rng: &mut RngStream) -> Result<Self> {
        let designated = [vocab.ambiguous_id()];
        Self::with_designated(vocab, config, &designated, rng)
    }

    pub fn with_designated(
        vocab: Vocab,
        config: ModelConfig,
        designated: &[usize],
        rng: &mut RngStream,
    ) -> Result<Self> {
        config.validate(ModelKind::NrrLite)?;
        if designated.is_empty() {
            return Err(NrrError::Config("no designated ambiguous tokens".into()));
        }
        let table = MultiVectorTable::new(
            vocab.len(),
            config.embed_dim,
            designated,
            config.k,
            config.init_scale,
            rng,
        )?;
        let s = config.init_scale;
        let gate = Param::new(Mat::uniform(config.k, config.embed_dim, -s, s, rng));
        let head = Mlp::uniform(config.head_shape(Label::COUNT), s, rng);
        Ok(Self {
            config,
            vocab,
            table,
            gate,
            head,
        })
    }

    pub fn zero_head(&mut self) {
        self.head = Mlp::zeros(self.head.shape);
    }

    pub fn interpret(&self, e: &Episode) -> Result<InterpretationSet> {
        Ok(self.trace(e)?.set)
    }

    /// Variant vectors of the vocabulary's ambiguous token.
    pub fn ambiguous_variants(&self) -> Vec<Vec<f64>> {
        self.table
            .variant_vectors(self.vocab.ambiguous_id())
            .unwrap_or_default()
    }

    fn trace(&self, e: &Episode) -> Result<NrrTrace> {
        let d = self.config.embed_dim;
        let vocab_len = self.vocab.len();

        let mut slot = None;
        let mut context_ids = Vec::with_capacity(e.turn1.len() + e.turn2.len());
        for &id in &e.turn1 {
            check_token(vocab_len, id)?;
            match self.table.variant_slot(id) {
                Some(s) if slot.is_none() => slot = Some(s),
                Some(_) => return Err(NrrError::Structure("turn 1 holds more than one ambiguous token".into())),
                None => context_ids.push(id),
            }
        }
        let slot = slot.ok_or_else(|| NrrError::Structure("turn 1 holds no designated ambiguous token".into()))?;
        if e.turn2.is_empty() {
            return Err(NrrError::Structure("turn 2 is empty".into()));
        }
        for &id in &e.turn2 {
            check_token(vocab_len, id)?;
            if self.table.variant_slot(id).is_some() {
                return Err(NrrError::Structure("ambiguous token in turn 2 is not supported".into()));
            }
            context_ids.push(id);
        }

        let count = (context_ids.len() + 1) as f64;
        let mut shared = vec![0.0; d];
        for &id in &context_ids {
            axpy(1.0, self.table.base.value.row(id), &mut shared);
        }

        let mut pooled_turn2 = vec![0.0; d];
        for &id in &e.turn2 {
            axpy(1.0, self.table.base.value.row(id), &mut pooled_turn2);
        }
        let inv2 = 1.0 / e.turn2.len() as f64;
        pooled_turn2.iter_mut().for_each(|v| *v *= inv2);
        let gate = softmax(&self.gate.value.matvec(&pooled_turn2)?);

        let variant_table = &self.table.variants[slot].1.value;
        let k = variant_table.rows();
        let mut variants = Vec::with_capacity(k);
        let mut heads = Vec::with_capacity(k);
        let mut per_variant_probs = Vec::with_capacity(k);
        for i in 0..k {
            let mut enc = shared.clone();
            axpy(1.0, variant_table.row(i), &mut enc);
            enc.iter_mut().for_each(|v| *v /= count);
            let t = self.head.forward(&enc)?;
            per_variant_probs.push(softmax(&t.logits));
            variants.push(enc);
            heads.push(t);
        }

        let mut fused_probs = vec![0.0; Label::COUNT];
        for (g, p) in gate.iter().zip(&per_variant_probs) {
            axpy(*g, p, &mut fused_probs);
        }

        Ok(NrrTrace {
            slot,
            context_ids,
            turn2_ids: e.turn2.clone(),
            pooled_turn2,
            heads,
            set: InterpretationSet {
                variants,
                gate,
                per_variant_probs,
                fused_probs,
            },
        })
    }
}

impl Parameterized for NrrLiteClassifier {
    fn params(&self) -> Vec<&Param> {
        let mut p = vec![&self.table.base];
        p.extend(self.table.variants.iter().map(|(_, v)| v));
        p.push(&self.gate);
        p.extend(self.head.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = vec![&mut self.table.base];
        p.extend(self.table.variants.iter_mut().map(|(_, v)| v));
        p.push(&mut self.gate);
        p.extend(self.head.params_mut());
        p
    }
}

impl Classifier for NrrLiteClassifier {
    fn kind(&self) -> ModelKind {
        ModelKind::NrrLite
    }

    fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn predict(&self, e: &Episode) -> Result<Vec<f64>> {
        Ok(self.interpret(e)?.fused_probs)
    }

    fn gate(&self, e: &Episode) -> Result<Option<Vec<f64>>> {
        Ok(Some(self.interpret(e)?.gate))
    }

    fn accumulate_gradients(&mut self, e: &Episode, scale: f64) -> Result<f64> {
        let trace = self.trace(e)?;
        let set = &trace.set;
        let gold = e.label.index();
        let loss = cross_entropy(&set.fused_probs, gold)?;

        let mut d_fused = cross_entropy_backward(&set.fused_probs, gold)?;
        d_fused.iter_mut().for_each(|g| *g *= scale);

        // gate branch: fused = Σ gᵢ pᵢ  ⇒  ∂/∂gᵢ = ⟨pᵢ, d_fused⟩
        let d_gate: Vec<f64> = set
            .per_variant_probs
            .iter()
            .map(|p| crate::kernel::dot(p, &d_fused))
            .collect();
        let d_gate_logits = softmax_backward(&set.gate, &d_gate);
        self.gate.grad.add_outer(1.0, &d_gate_logits, &trace.pooled_turn2);
        let d_pooled = self.gate.value.matvec_t(&d_gate_logits)?;
        let inv2 = 1.0 / trace.turn2_ids.len() as f64;
        for &id in &trace.turn2_ids {
            axpy(inv2, &d_pooled, self.table.base.grad.row_mut(id));
        }

        // variant branches through the shared head
        let count = (trace.context_ids.len() + 1) as f64;
        let mut d_shared = vec![0.0; self.config.embed_dim];
        for (i, head_trace) in trace.heads.iter().enumerate() {
            let d_p: Vec<f64> = d_fused.iter().map(|g| g * set.gate[i]).collect();
            let d_logits = softmax_backward(&set.per_variant_probs[i], &d_p);
            let d_enc = self.head.backward(head_trace, &d_logits)?;
            let variant_grad = &mut self.table.variants[trace.slot].1.grad;
            axpy(1.0 / count, &d_enc, variant_grad.row_mut(i));
            axpy(1.0 / count, &d_enc, &mut d_shared);
        }
        for &id in &trace.context_ids {
            axpy(1.0, &d_shared, self.table.base.grad.row_mut(id));
        }
        Ok(loss)
    }

    fn mask_frozen_gradients(&mut self) {
        self.table.base.grad.row_mut(NEUTRAL_ID).fill(0.0);
        for (id, _) in &self.table.variants {
            self.table.base.grad.row_mut(*id).fill(0.0);
        }
    }
}
