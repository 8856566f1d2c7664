//! Run configuration and its layered resolution.
//!
//! Layers, lowest precedence first: built-in defaults, the `NRR_SEED`
//! environment variable, a JSON config file, command-line flags. Each layer is
//! a partial JSON object merged key by key into the one below.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use nrr_core::dataset::DatasetSpec;
use nrr_core::models::{ModelConfig, ModelKind, TrainConfig};

pub const SEED_ENV: &str = "NRR_SEED";
pub const DEFAULT_SEED_COUNT: u64 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub models: Vec<ModelKind>,
    pub seeds: Vec<u64>,
    /// Training data; `dataset.n` is the training-set size and `dataset.seed`
    /// the data seed shared by every run.
    pub dataset: DatasetSpec,
    pub n_eval: usize,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            models: vec![ModelKind::Baseline, ModelKind::NrrLite],
            seeds: (0..DEFAULT_SEED_COUNT).collect(),
            dataset: DatasetSpec::default(),
            n_eval: 200,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            bail!("no models selected");
        }
        if self.seeds.is_empty() {
            bail!("no seeds selected");
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            bail!("duplicate seeds in {:?}", self.seeds);
        }
        let mut models = self.models.clone();
        models.sort_unstable();
        models.dedup();
        if models.len() != self.models.len() {
            bail!("duplicate models");
        }
        if self.n_eval == 0 {
            bail!("n_eval must be positive");
        }
        self.dataset.validate()?;
        for &kind in &self.models {
            self.model.validate(kind)?;
        }
        if self.train.epochs == 0 || self.train.batch_size == 0 {
            bail!("epochs and batch_size must be positive");
        }
        self.train.optimizer.validate()?;
        Ok(())
    }

    pub fn eval_spec(&self) -> DatasetSpec {
        self.dataset.held_out(self.n_eval)
    }
}

/// Partial configuration as a JSON object.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Layer(Map<String, Value>);

impl Layer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_value(v: Value) -> Result<Self> {
        match v {
            Value::Object(m) => Ok(Self(m)),
            other => bail!("config must be a JSON object, got {other}"),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let v: Value = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Self::from_value(v)
    }

    /// `NRR_SEED=s` turns the default seed list into `s, s+1, …`.
    pub fn from_env_value(raw: Option<&str>) -> Result<Self> {
        let mut layer = Self::new();
        if let Some(raw) = raw {
            let base: u64 = raw
                .trim()
                .parse()
                .with_context(|| format!("{SEED_ENV}={raw} is not an unsigned integer"))?;
            let seeds: Vec<u64> = (0..DEFAULT_SEED_COUNT)
                .map(|i| base.checked_add(i).context("seed overflow"))
                .collect::<Result<_>>()?;
            layer.set(&["seeds"], serde_json::to_value(seeds)?);
        }
        Ok(layer)
    }

    /// Sets a nested key, creating intermediate objects.
    pub fn set(&mut self, path: &[&str], value: Value) {
        let (last, parents) = path.split_last().expect("non-empty key path");
        let mut map = &mut self.0;
        for key in parents {
            let entry = map.entry(key.to_string()).or_insert_with(|| Value::Object(Map::new()));
            if !entry.is_object() {
                *entry = Value::Object(Map::new());
            }
            map = entry.as_object_mut().expect("object");
        }
        map.insert(last.to_string(), value);
    }

    pub fn set_opt<T: Serialize>(&mut self, path: &[&str], value: Option<T>) -> Result<()> {
        if let Some(v) = value {
            self.set(path, serde_json::to_value(v)?);
        }
        Ok(())
    }
}

fn merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

/// Merges `layers` (lowest precedence first) over the defaults.
pub fn resolve(layers: &[Layer]) -> Result<RunConfig> {
    let mut value = serde_json::to_value(RunConfig::default())?;
    for layer in layers {
        merge(&mut value, &Value::Object(layer.0.clone()));
    }
    let config: RunConfig = serde_json::from_value(value).context("invalid configuration")?;
    config.validate()?;
    Ok(config)
}

/// Parses `0..4` (inclusive), `3` or `0,2,5`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let lo: u64 = a.trim().parse().with_context(|| format!("bad seed range `{s}`"))?;
        let hi: u64 = b
            .trim()
            .trim_start_matches('=')
            .parse()
            .with_context(|| format!("bad seed range `{s}`"))?;
        if hi < lo {
            bail!("empty seed range `{s}`");
        }
        return Ok((lo..=hi).collect());
    }
    s.split(',')
        .map(|p| p.trim().parse::<u64>().with_context(|| format!("bad seed `{p}`")))
        .collect()
}

pub fn parse_models(s: &str) -> Result<Vec<ModelKind>> {
    s.split(',')
        .map(|p| p.trim().parse::<ModelKind>().map_err(anyhow::Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn defaults_resolve() {
        let c = resolve(&[]).unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.seeds, vec![0, 1, 2, 3, 4]);
        assert_eq!(c.dataset.n, 1000);
        assert_eq!(c.model.embed_dim, 32);
    }

    #[test]
    fn flags_beat_file_beat_env() {
        let env = Layer::from_env_value(Some("10")).unwrap();
        let file = Layer::from_value(json!({"train": {"epochs": 7}, "seeds": [1, 2]})).unwrap();
        let mut flags = Layer::new();
        flags.set(&["train", "epochs"], json!(3));
        let c = resolve(&[env.clone(), file.clone(), flags]).unwrap();
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.seeds, vec![1, 2]);
        assert_eq!(c.train.batch_size, 1);
        let c = resolve(&[env]).unwrap();
        assert_eq!(c.seeds, vec![10, 11, 12, 13, 14]);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(resolve(&[Layer::from_value(json!({"epoch": 3})).unwrap()]).is_err());
        assert!(resolve(&[Layer::from_value(json!({"seeds": []})).unwrap()]).is_err());
        assert!(resolve(&[Layer::from_value(json!({"model": {"k": 1}})).unwrap()]).is_err());
        assert!(Layer::from_value(json!([1])).is_err());
        assert!(Layer::from_env_value(Some("x")).is_err());
    }

    #[test]
    fn seed_syntax() {
        assert_eq!(parse_seeds("0..4").unwrap(), vec![0, 1, 2, 3, 4]);
        assert_eq!(parse_seeds("7").unwrap(), vec![7]);
        assert_eq!(parse_seeds("1, 3,5").unwrap(), vec![1, 3, 5]);
        assert!(parse_seeds("4..1").is_err());
        assert!(parse_seeds("a").is_err());
        assert_eq!(
            parse_models("baseline,nrr-lite").unwrap(),
            vec![ModelKind::Baseline, ModelKind::NrrLite]
        );
        assert!(parse_models("mlp").is_err());
    }
}
