//! Contextual identity tracking.
//!
//! [`ContextTracker`] assigns a context id to each observed hidden vector and
//! opens a new context whenever the cosine distance to the previous vector
//! exceeds `tau`. [`IdentityLedger`] stores one representative vector per
//! (symbol, context) pair, so the same symbol can carry different identities
//! in different contexts.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{NrrError, Result};
use crate::kernel::{dot, norm};

/// Default cosine-distance threshold for a context switch.
pub const DEFAULT_TAU: f64 = 0.5;

/// Cosine similarity in `[-1, 1]`.
pub fn similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(NrrError::shape("cit::similarity", a.len(), b.len()));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(NrrError::Degenerate("cosine similarity of a zero vector".into()));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// `1 - similarity`, in `[0, 2]`.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    Ok(1.0 - similarity(a, b)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextTracker {
    tau: f64,
    current: Option<u64>,
    last: Option<Vec<f64>>,
}

impl Default for ContextTracker {
    fn default() -> Self {
        Self::new(DEFAULT_TAU).expect("default tau is valid")
    }
}

impl ContextTracker {
    pub fn new(tau: f64) -> Result<Self> {
        if !(0.0..=2.0).contains(&tau) {
            return Err(NrrError::Config(format!("tau {tau} outside [0, 2]")));
        }
        Ok(Self {
            tau,
            current: None,
            last: None,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Id of the most recent observation, if any.
    pub fn current(&self) -> Option<u64> {
        self.current
    }

    /// Records `h` and returns its context id. A rejected vector leaves the
    /// tracker unchanged.
    pub fn observe(&mut self, h: &[f64]) -> Result<u64> {
        if norm(h) == 0.0 {
            return Err(NrrError::Degenerate("zero hidden vector".into()));
        }
        let id = match (&self.last, self.current) {
            (Some(prev), Some(id)) => {
                if cosine_distance(h, prev)? > self.tau {
                    id + 1
                } else {
                    id
                }
            }
            _ => 0,
        };
        self.current = Some(id);
        self.last = Some(h.to_vec());
        Ok(id)
    }

    pub fn observe_all<'a>(&mut self, seq: impl IntoIterator<Item = &'a [f64]>) -> Result<Vec<u64>> {
        seq.into_iter().map(|h| self.observe(h)).collect()
    }
}

/// Number of context switches a fresh tracker reports over `seq`.
pub fn count_switches(seq: &[Vec<f64>], tau: f64) -> Result<u64> {
    let mut tracker = ContextTracker::new(tau)?;
    let ids = tracker.observe_all(seq.iter().map(Vec::as_slice))?;
    Ok(ids.last().copied().unwrap_or(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityRecord {
    pub symbol: String,
    pub context_id: u64,
    /// Mean of every vector recorded for this (symbol, context).
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IdentityLedger {
    entries: BTreeMap<(String, u64), (Vec<f64>, usize)>,
}

impl IdentityLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Folds `vector` into the running mean for `(symbol, context_id)`.
    pub fn record_identity(&mut self, symbol: &str, context_id: u64, vector: &[f64]) -> Result<()> {
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(NrrError::NonFinite(format!("identity vector for `{symbol}`")));
        }
        match self.entries.get_mut(&(symbol.to_string(), context_id)) {
            Some((mean, count)) => {
                if mean.len() != vector.len() {
                    return Err(NrrError::shape(
                        "IdentityLedger::record_identity",
                        mean.len(),
                        vector.len(),
                    ));
                }
                *count += 1;
                let inv = 1.0 / *count as f64;
                for (m, v) in mean.iter_mut().zip(vector) {
                    *m += (v - *m) * inv;
                }
            }
            None => {
                self.entries
                    .insert((symbol.to_string(), context_id), (vector.to_vec(), 1));
            }
        }
        Ok(())
    }

    pub fn lookup(&self, symbol: &str, context_id: u64) -> Result<IdentityRecord> {
        self.entries
            .get(&(symbol.to_string(), context_id))
            .map(|(v, _)| IdentityRecord {
                symbol: symbol.to_string(),
                context_id,
                vector: v.clone(),
            })
            .ok_or_else(|| NrrError::NotFound(format!("identity of `{symbol}` in context {context_id}")))
    }

    /// Context ids recorded for `symbol`, ascending.
    pub fn contexts_of(&self, symbol: &str) -> Vec<u64> {
        self.entries
            .keys()
            .filter(|(s, _)| s == symbol)
            .map(|&(_, c)| c)
            .collect()
    }

    /// All records ordered by symbol, then context id.
    pub fn records(&self) -> Vec<IdentityRecord> {
        self.entries
            .iter()
            .map(|((symbol, context_id), (vector, _))| IdentityRecord {
                symbol: symbol.clone(),
                context_id: *context_id,
                vector: vector.clone(),
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.records())?)
    }

    pub fn export(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        writeln!(f, "{}", self.to_json()?)?;
        Ok(())
    }

    pub fn from_records(records: &[IdentityRecord]) -> Result<Self> {
        let mut ledger = Self::new();
        for r in records {
            if ledger.entries.contains_key(&(r.symbol.clone(), r.context_id)) {
                return Err(NrrError::Validation(format!(
                    "duplicate identity for `{}` in context {}",
                    r.symbol, r.context_id
                )));
            }
            ledger.record_identity(&r.symbol, r.context_id, &r.vector)?;
        }
        Ok(ledger)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::RngStream;
    use proptest::prelude::*;

    #[test]
    fn similarity_examples() {
        let v = [0.3, -1.2, 2.0];
        assert!((similarity(&v, &v).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let s = similarity(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((s - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(matches!(
            similarity(&[0.0, 0.0], &[1.0, 0.0]),
            Err(NrrError::Degenerate(_))
        ));
        assert!(matches!(similarity(&[1.0], &[1.0, 0.0]), Err(NrrError::Shape { .. })));
    }

    #[test]
    fn constant_sequence_stays_in_one_context() {
        let mut t = ContextTracker::new(0.1).unwrap();
        let v = [0.5, 0.2, -0.1];
        let ids = t.observe_all([&v[..], &v[..], &v[..]]).unwrap();
        assert_eq!(ids, vec![0, 0, 0]);
    }

    #[test]
    fn orthogonal_shift_opens_one_context() {
        let mut t = ContextTracker::new(0.5).unwrap();
        assert_eq!(t.observe(&[1.0, 0.0]).unwrap(), 0);
        assert_eq!(t.observe(&[0.0, 1.0]).unwrap(), 1);
    }

    #[test]
    fn antipodal_shift_crosses_high_threshold() {
        let mut t = ContextTracker::new(1.5).unwrap();
        assert_eq!(t.observe(&[1.0, 2.0]).unwrap(), 0);
        assert_eq!(t.observe(&[-1.0, -2.0]).unwrap(), 1);
    }

    #[test]
    fn zero_vector_is_rejected_without_state_change() {
        let mut t = ContextTracker::default();
        t.observe(&[1.0, 0.0]).unwrap();
        assert!(matches!(t.observe(&[0.0, 0.0]), Err(NrrError::Degenerate(_))));
        assert_eq!(t.current(), Some(0));
        assert_eq!(t.observe(&[1.0, 0.1]).unwrap(), 0);
    }

    #[test]
    fn tau_out_of_range_is_rejected() {
        assert!(ContextTracker::new(-0.1).is_err());
        assert!(ContextTracker::new(2.5).is_err());
        assert!(ContextTracker::new(f64::NAN).is_err());
    }

    #[test]
    fn ledger_keeps_separate_identities() {
        let mut ledger = IdentityLedger::new();
        ledger.record_identity("bank", 0, &[1.0, 0.2]).unwrap();
        ledger.record_identity("bank", 1, &[0.1, 1.0]).unwrap();
        assert_eq!(ledger.lookup("bank", 0).unwrap().vector, vec![1.0, 0.2]);
        let a = ledger.lookup("bank", 0).unwrap().vector;
        let b = ledger.lookup("bank", 1).unwrap().vector;
        let s = similarity(&a, &b).unwrap();
        assert!(s > 0.0 && s < 1.0);
        assert!(matches!(ledger.lookup("bank", 7), Err(NrrError::NotFound(_))));
        assert_eq!(ledger.contexts_of("bank"), vec![0, 1]);
    }

    #[test]
    fn ledger_representative_is_the_mean() {
        let mut ledger = IdentityLedger::new();
        ledger.record_identity("x", 0, &[1.0, 0.0]).unwrap();
        ledger.record_identity("x", 0, &[3.0, 2.0]).unwrap();
        assert_eq!(ledger.lookup("x", 0).unwrap().vector, vec![2.0, 1.0]);
        assert_eq!(ledger.len(), 1);
        assert!(ledger.record_identity("x", 0, &[1.0]).is_err());
    }

    #[test]
    fn ledger_json_round_trips() {
        let mut ledger = IdentityLedger::new();
        ledger.record_identity("bank", 1, &[0.25, -0.5]).unwrap();
        ledger.record_identity("bank", 0, &[1.0, 0.0]).unwrap();
        let json = ledger.to_json().unwrap();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(value[0]["symbol"], "bank");
        assert_eq!(value[0]["context_id"], 0);
        assert_eq!(value[1]["vector"][1], -0.5);
        let records: Vec<IdentityRecord> = serde_json::from_str(&json).unwrap();
        assert_eq!(IdentityLedger::from_records(&records).unwrap(), ledger);
    }

    fn random_sequence(seed: u64, len: usize, dim: usize) -> Vec<Vec<f64>> {
        let mut rng = RngStream::new(seed);
        (0..len)
            .map(|_| loop {
                let v: Vec<f64> = (0..dim).map(|_| rng.uniform(-1.0, 1.0)).collect();
                if norm(&v) > 1e-3 {
                    break v;
                }
            })
            .collect()
    }

    #[test]
    fn raising_tau_never_adds_switches() {
        let taus = [0.0, 0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0];
        for seed in 0..100 {
            let seq = random_sequence(seed, 30, 3);
            let counts: Vec<u64> = taus.iter().map(|&t| count_switches(&seq, t).unwrap()).collect();
            assert!(counts.windows(2).all(|w| w[1] <= w[0]), "seed {seed}: {counts:?}");
        }
    }

    proptest! {
        #[test]
        fn ids_step_by_at_most_one(seed in 0u64..10_000, tau in 0.0f64..2.0) {
            let seq = random_sequence(seed, 20, 4);
            let mut t = ContextTracker::new(tau).unwrap();
            let ids = t.observe_all(seq.iter().map(Vec::as_slice)).unwrap();
            prop_assert_eq!(ids[0], 0);
            for w in ids.windows(2) {
                prop_assert!(w[1] == w[0] || w[1] == w[0] + 1);
            }
        }

        #[test]
        fn distance_is_symmetric_and_zero_on_self(seed in 0u64..10_000) {
            let seq = random_sequence(seed, 2, 5);
            let (a, b) = (&seq[0], &seq[1]);
            prop_assert!(cosine_distance(a, a).unwrap().abs() < 1e-12);
            prop_assert_eq!(cosine_distance(a, b).unwrap(), cosine_distance(b, a).unwrap());
        }
    }
}
