//! Resolution policies.
//!
//! A policy looks at an [`InterpretationSet`] from outside and decides whether
//! to commit to one interpretation or keep all of them. It never modifies the
//! set.

use serde::{Deserialize, Serialize};

use crate::cit::cosine_distance;
use crate::error::{NrrError, Result};
use crate::models::InterpretationSet;

const GATE_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResolutionMode {
    /// Always commit to the gate's argmax.
    Classify,
    /// Commit only when one interpretation dominates and context is stable.
    Generate,
    /// Never commit.
    Defer,
}

impl std::str::FromStr for ResolutionMode {
    type Err = NrrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classify" => Ok(ResolutionMode::Classify),
            "generate" => Ok(ResolutionMode::Generate),
            "defer" => Ok(ResolutionMode::Defer),
            other => Err(NrrError::Config(format!("unknown resolution mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResolutionPolicy {
    pub mode: ResolutionMode,
    /// A gate weight must exceed this to count as dominant.
    pub dominance_theta: f64,
    /// Number of most recent drift values that must all be small.
    pub stability_window: usize,
    pub drift_epsilon: f64,
}

impl Default for ResolutionPolicy {
    fn default() -> Self {
        Self {
            mode: ResolutionMode::Generate,
            dominance_theta: 0.9,
            stability_window: 2,
            drift_epsilon: 0.1,
        }
    }
}

impl ResolutionPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.dominance_theta > 0.5 && self.dominance_theta <= 1.0) {
            return Err(NrrError::Config(format!(
                "dominance_theta {} outside (0.5, 1]",
                self.dominance_theta
            )));
        }
        if self.stability_window == 0 {
            return Err(NrrError::Config("stability_window must be positive".into()));
        }
        if !(self.drift_epsilon >= 0.0) {
            return Err(NrrError::Config("drift_epsilon must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "criterion", rename_all = "snake_case")]
pub enum Rationale {
    ClassifyMode,
    DeferMode,
    /// Dominant and stable.
    DominantAndStable {
        weight: f64,
    },
    NotDominant {
        weight: f64,
    },
    /// A recent drift value exceeded the tolerance.
    ContextDrifting {
        drift: f64,
    },
    /// Fewer drift values than the stability window.
    InsufficientHistory {
        available: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Decision {
    Resolved { index: usize },
    Retained,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionOutcome {
    pub decision: Decision,
    pub rationale: Rationale,
}

impl ResolutionOutcome {
    pub fn resolved_index(&self) -> Option<usize> {
        match self.decision {
            Decision::Resolved { index } => Some(index),
            Decision::Retained => None,
        }
    }

    pub fn is_retained(&self) -> bool {
        self.decision == Decision::Retained
    }
}

impl std::fmt::Display for ResolutionOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.decision {
            Decision::Resolved { index } => write!(f, "Resolved({index})")?,
            Decision::Retained => f.write_str("Retained")?,
        }
        match self.rationale {
            Rationale::ClassifyMode => f.write_str(": classify mode"),
            Rationale::DeferMode => f.write_str(": defer mode"),
            Rationale::DominantAndStable { weight } => write!(f, ": dominant ({weight:.4}) and stable"),
            Rationale::NotDominant { weight } => write!(f, ": max gate {weight:.4} not dominant"),
            Rationale::ContextDrifting { drift } => write!(f, ": context drift {drift:.4}"),
            Rationale::InsufficientHistory { available } => {
                write!(f, ": only {available} drift values")
            }
        }
    }
}

/// Index of the largest gate weight; ties go to the lowest index.
fn gate_argmax(gate: &[f64]) -> (usize, f64) {
    let mut best = (0, gate[0]);
    for (i, &g) in gate.iter().enumerate().skip(1) {
        if g > best.1 {
            best = (i, g);
        }
    }
    best
}

/// Applies `policy` to `set`. `drift_history` holds recent context drift
/// values, oldest first; only generate mode reads it.
pub fn resolve(set: &InterpretationSet, policy: &ResolutionPolicy, drift_history: &[f64]) -> Result<ResolutionOutcome> {
    policy.validate()?;
    let gate = &set.gate;
    if gate.is_empty() {
        return Err(NrrError::Structure("empty interpretation set".into()));
    }
    if gate.iter().any(|g| !(*g >= 0.0)) || (gate.iter().sum::<f64>() - 1.0).abs() > GATE_SUM_TOLERANCE {
        return Err(NrrError::Validation(format!("gate {gate:?} is not a distribution")));
    }
    if policy.dominance_theta <= 1.0 / gate.len() as f64 {
        return Err(NrrError::Config(format!(
            "dominance_theta {} must exceed 1/k = {}",
            policy.dominance_theta,
            1.0 / gate.len() as f64
        )));
    }
    let (index, weight) = gate_argmax(gate);
    let outcome = |decision, rationale| Ok(ResolutionOutcome { decision, rationale });
    match policy.mode {
        ResolutionMode::Classify => outcome(Decision::Resolved { index }, Rationale::ClassifyMode),
        ResolutionMode::Defer => outcome(Decision::Retained, Rationale::DeferMode),
        ResolutionMode::Generate => {
            if weight <= policy.dominance_theta {
                return outcome(Decision::Retained, Rationale::NotDominant { weight });
            }
            let m = policy.stability_window;
            if drift_history.len() < m {
                return outcome(
                    Decision::Retained,
                    Rationale::InsufficientHistory {
                        available: drift_history.len(),
                    },
                );
            }
            let recent = &drift_history[drift_history.len() - m..];
            if let Some(&drift) = recent.iter().find(|&&d| !(d <= policy.drift_epsilon)) {
                return outcome(Decision::Retained, Rationale::ContextDrifting { drift });
            }
            outcome(Decision::Resolved { index }, Rationale::DominantAndStable { weight })
        }
    }
}

/// Cosine distances between consecutive context encodings.
pub fn drift_history(encodings: &[Vec<f64>]) -> Result<Vec<f64>> {
    encodings.windows(2).map(|w| cosine_distance(&w[1], &w[0])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set_with_gate(gate: Vec<f64>) -> InterpretationSet {
        let k = gate.len();
        InterpretationSet {
            variants: vec![vec![0.0; 2]; k],
            gate,
            per_variant_probs: vec![vec![0.5, 0.5]; k],
            fused_probs: vec![0.5, 0.5],
        }
    }

    fn generate(theta: f64, m: usize) -> ResolutionPolicy {
        ResolutionPolicy {
            mode: ResolutionMode::Generate,
            dominance_theta: theta,
            stability_window: m,
            drift_epsilon: 0.1,
        }
    }

    #[test]
    fn uniform_gate_is_retained() {
        let out = resolve(&set_with_gate(vec![0.5, 0.5]), &generate(0.9, 1), &[0.0]).unwrap();
        assert!(out.is_retained());
        assert!(matches!(out.rationale, Rationale::NotDominant { .. }));
    }

    #[test]
    fn dominant_stable_gate_resolves() {
        let out = resolve(&set_with_gate(vec![0.95, 0.05]), &generate(0.9, 1), &[0.02]).unwrap();
        assert_eq!(out.resolved_index(), Some(0));
    }

    #[test]
    fn drift_blocks_resolution() {
        let set = set_with_gate(vec![0.05, 0.95]);
        let out = resolve(&set, &generate(0.9, 2), &[0.5, 0.01, 0.02]).unwrap();
        assert_eq!(out.resolved_index(), Some(1));
        let out = resolve(&set, &generate(0.9, 2), &[0.0, 0.01, 0.5]).unwrap();
        assert!(matches!(out.rationale, Rationale::ContextDrifting { drift } if drift == 0.5));
        let out = resolve(&set, &generate(0.9, 3), &[0.0, 0.01]).unwrap();
        assert!(matches!(out.rationale, Rationale::InsufficientHistory { available: 2 }));
    }

    #[test]
    fn classify_and_defer_ignore_criteria() {
        let set = set_with_gate(vec![0.3, 0.7]);
        let classify = ResolutionPolicy {
            mode: ResolutionMode::Classify,
            ..Default::default()
        };
        assert_eq!(resolve(&set, &classify, &[]).unwrap().resolved_index(), Some(1));
        let defer = ResolutionPolicy {
            mode: ResolutionMode::Defer,
            ..Default::default()
        };
        assert!(resolve(&set_with_gate(vec![1.0, 0.0]), &defer, &[0.0, 0.0])
            .unwrap()
            .is_retained());
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let classify = ResolutionPolicy {
            mode: ResolutionMode::Classify,
            ..Default::default()
        };
        let set = set_with_gate(vec![0.25, 0.375, 0.375]);
        assert_eq!(resolve(&set, &classify, &[]).unwrap().resolved_index(), Some(1));
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let p = ResolutionPolicy::default();
        assert!(matches!(
            resolve(&set_with_gate(vec![]), &p, &[]),
            Err(NrrError::Structure(_))
        ));
        assert!(resolve(&set_with_gate(vec![0.6, 0.6]), &p, &[]).is_err());
        assert!(resolve(&set_with_gate(vec![0.5, 0.5]), &generate(0.5, 1), &[]).is_err());
        assert!(resolve(&set_with_gate(vec![0.5, 0.5]), &generate(0.9, 0), &[]).is_err());
    }

    #[test]
    fn resolve_leaves_the_set_untouched() {
        let set = set_with_gate(vec![0.97, 0.03]);
        let copy = set.clone();
        resolve(&set, &generate(0.9, 1), &[0.0]).unwrap();
        assert_eq!(set, copy);
    }

    #[test]
    fn drift_history_uses_cosine_distance() {
        let d = drift_history(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(d, vec![0.0, 1.0]);
        assert!(drift_history(&[vec![1.0, 0.0], vec![0.0, 0.0]]).is_err());
    }

    fn gate_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..1.0, 2..6).prop_map(|w| {
            let s: f64 = w.iter().sum();
            w.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn argmax_survives_rescaling(gate in gate_strategy(), c in 0.01f64..100.0) {
            let classify = ResolutionPolicy { mode: ResolutionMode::Classify, ..Default::default() };
            let a = resolve(&set_with_gate(gate.clone()), &classify, &[]).unwrap();
            let scaled: Vec<f64> = gate.iter().map(|g| g * c).collect();
            let s: f64 = scaled.iter().sum();
            let renorm: Vec<f64> = scaled.iter().map(|g| g / s).collect();
            let b = resolve(&set_with_gate(renorm), &classify, &[]).unwrap();
            prop_assert_eq!(a.resolved_index(), b.resolved_index());
        }

        #[test]
        fn raising_theta_never_resolves_more(
            gate in gate_strategy(),
            t1 in 0.51f64..1.0,
            dt in 0.0f64..0.5,
            drift in prop::collection::vec(0.0f64..0.2, 0..4),
        ) {
            let t2 = (t1 + dt).min(1.0);
            let set = set_with_gate(gate);
            let low = resolve(&set, &generate(t1, 2), &drift).unwrap();
            let high = resolve(&set, &generate(t2, 2), &drift).unwrap();
            prop_assert!(!(low.is_retained() && !high.is_retained()));
        }
    }
}
