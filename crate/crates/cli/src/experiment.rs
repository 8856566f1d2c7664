//! Training runs, evaluation and the sweep report.

use std::collections::BTreeMap;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use nrr_core::cit::similarity;
use nrr_core::dataset::{generate, neutralize, Episode, Label};
use nrr_core::kernel::{argmax, RngStream};
use nrr_core::metrics::{accuracy, aggregate, entropy, SeedResult, SweepSummary};
use nrr_core::models::{train, AnyClassifier, Classifier, ModelKind, TrainOutcome};

use crate::config::RunConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// Stream ids split off a run seed.
const INIT_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;

/// How the two trained variants of the ambiguous token differ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantDiagnostics {
    pub cosine: f64,
    /// Per-variant class probabilities on the first neutralized eval episode.
    pub per_variant_probs: Vec<Vec<f64>>,
    pub per_variant_argmax: Vec<usize>,
}

impl VariantDiagnostics {
    pub fn argmax_differs(&self) -> bool {
        self.per_variant_argmax.windows(2).any(|w| w[0] != w[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub model: ModelKind,
    #[serde(flatten)]
    pub result: SeedResult,
    pub final_train_loss: f64,
    pub variants: Option<VariantDiagnostics>,
    /// P(FINANCIAL) on each neutralized eval episode, in eval order.
    pub turn1_p_financial: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub config: RunConfig,
    /// Ordered by model (config order), then seed (config order).
    pub runs: Vec<RunRecord>,
    /// NRR-lite versus baseline; present when both models ran on ≥2 seeds.
    pub summary: Option<SweepSummary>,
}

impl ExperimentReport {
    pub fn runs_of(&self, model: ModelKind) -> impl Iterator<Item = &RunRecord> {
        self.runs.iter().filter(move |r| r.model == model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let report: Self = serde_json::from_str(s).context("parsing report")?;
        if report.schema_version != SCHEMA_VERSION {
            bail!(
                "report schema version {} (expected {SCHEMA_VERSION})",
                report.schema_version
            );
        }
        Ok(report)
    }
}

/// Training and evaluation sets for a configuration.
pub struct Data {
    pub train: Vec<Episode>,
    pub eval: Vec<Episode>,
}

impl Data {
    pub fn generate(config: &RunConfig) -> Result<Self> {
        Ok(Self {
            train: generate(&config.dataset)?,
            eval: generate(&config.eval_spec())?,
        })
    }
}

/// Fresh, untrained model for `seed`.
pub fn init_model(config: &RunConfig, kind: ModelKind, seed: u64) -> Result<AnyClassifier> {
    let vocab = config.dataset.vocab()?;
    Ok(AnyClassifier::new(
        kind,
        vocab,
        config.model,
        &mut RngStream::new(seed).split(INIT_STREAM),
    )?)
}

pub fn train_model(
    config: &RunConfig,
    kind: ModelKind,
    seed: u64,
    episodes: &[Episode],
) -> Result<(AnyClassifier, TrainOutcome)> {
    let mut model = init_model(config, kind, seed)?;
    let mut rng = RngStream::new(seed).split(SHUFFLE_STREAM);
    let outcome = train(&mut model, episodes, &config.train, &mut rng)
        .with_context(|| format!("training {kind} with seed {seed}"))?;
    Ok((model, outcome))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub turn1_entropy_mean: f64,
    pub gate_entropy_mean: Option<f64>,
    pub context_accuracy: f64,
    pub turn1_p_financial: Vec<f64>,
}

pub fn evaluate(model: &dyn Classifier, eval: &[Episode]) -> Result<Evaluation> {
    if eval.is_empty() {
        bail!("empty evaluation set");
    }
    let mut h = 0.0;
    let mut gate_h = 0.0;
    let mut gated = true;
    let mut p_fin = Vec::with_capacity(eval.len());
    let mut predictions = Vec::with_capacity(eval.len());
    for e in eval {
        let p = model.predict_turn1(e)?;
        h += entropy(&p)?;
        p_fin.push(p[Label::Financial.index()]);
        match model.gate(&neutralize(e))? {
            Some(g) => gate_h += entropy(&g)?,
            None => gated = false,
        }
        predictions.push(argmax(&model.predict(e)?));
    }
    let golds: Vec<usize> = eval.iter().map(|e| e.label.index()).collect();
    let n = eval.len() as f64;
    Ok(Evaluation {
        turn1_entropy_mean: h / n,
        gate_entropy_mean: gated.then_some(gate_h / n),
        context_accuracy: accuracy(&predictions, &golds)?,
        turn1_p_financial: p_fin,
    })
}

pub fn variant_diagnostics(model: &AnyClassifier, eval: &[Episode]) -> Result<Option<VariantDiagnostics>> {
    let Some(nrr) = model.as_nrr() else {
        return Ok(None);
    };
    let v = nrr.ambiguous_variants();
    if v.len() < 2 {
        bail!("ambiguous token has {} variants", v.len());
    }
    let probe = eval.first().ok_or_else(|| anyhow!("empty evaluation set"))?;
    let set = nrr.interpret(&neutralize(probe))?;
    Ok(Some(VariantDiagnostics {
        cosine: similarity(&v[0], &v[1])?,
        per_variant_argmax: set.per_variant_probs.iter().map(|p| argmax(p)).collect(),
        per_variant_probs: set.per_variant_probs,
    }))
}

pub fn run_one(config: &RunConfig, kind: ModelKind, seed: u64, data: &Data) -> Result<RunRecord> {
    let (model, outcome) = train_model(config, kind, seed, &data.train)?;
    let ev = evaluate(&model, &data.eval)?;
    Ok(RunRecord {
        model: kind,
        result: SeedResult {
            seed,
            turn1_entropy_mean: ev.turn1_entropy_mean,
            gate_entropy_mean: ev.gate_entropy_mean,
            context_accuracy: ev.context_accuracy,
        },
        final_train_loss: outcome.final_loss(),
        variants: variant_diagnostics(&model, &data.eval)?,
        turn1_p_financial: ev.turn1_p_financial,
    })
}

/// Trains every (model, seed) pair, up to `jobs` at a time. The report does
/// not depend on `jobs`.
pub fn run_sweep(config: &RunConfig, data: &Data, jobs: usize) -> Result<ExperimentReport> {
    config.validate()?;
    let tasks: Vec<(ModelKind, u64)> = config
        .models
        .iter()
        .flat_map(|&m| config.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let jobs = jobs.clamp(1, tasks.len());
    let mut done: BTreeMap<usize, Result<RunRecord>> = BTreeMap::new();
    for chunk in tasks.iter().enumerate().collect::<Vec<_>>().chunks(jobs) {
        let results: Vec<(usize, Result<RunRecord>)> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&(i, &(kind, seed))| (i, scope.spawn(move || run_one(config, kind, seed, data))))
                .collect();
            handles
                .into_iter()
                .map(|(i, h)| (i, h.join().unwrap_or_else(|_| Err(anyhow!("worker panicked")))))
                .collect()
        });
        done.extend(results);
    }
    let runs = done.into_values().collect::<Result<Vec<_>>>()?;

    let results_of = |kind| -> Vec<SeedResult> {
        runs.iter()
            .filter(|r| r.model == kind)
            .map(|r| r.result.clone())
            .collect()
    };
    let summary = if config.models.contains(&ModelKind::NrrLite)
        && config.models.contains(&ModelKind::Baseline)
        && config.seeds.len() >= 2
    {
        Some(aggregate(
            (ModelKind::NrrLite.as_str(), &results_of(ModelKind::NrrLite)),
            (ModelKind::Baseline.as_str(), &results_of(ModelKind::Baseline)),
        )?)
    } else {
        None
    };
    Ok(ExperimentReport {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        runs,
        summary,
    })
}
