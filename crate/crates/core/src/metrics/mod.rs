//! Entropy, accuracy and multi-seed aggregation.

mod stats;

use serde::{Deserialize, Serialize};

use crate::error::{NrrError, Result};

pub use stats::{
    ln_gamma, mean, regularized_incomplete_beta, sample_std, sample_variance, student_t_two_sided_p, welch_t,
    welch_t_from_summary, WelchResult,
};

/// Tolerance on `Σp = 1` accepted by [`entropy`].
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Shannon entropy in nats, `H(p) = −Σ pᵢ ln pᵢ`, with `0·ln 0 = 0`.
pub fn entropy(p: &[f64]) -> Result<f64> {
    if p.is_empty() {
        return Err(NrrError::Validation("empty distribution".into()));
    }
    if let Some(bad) = p.iter().find(|&&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(NrrError::Validation(format!("invalid probability {bad}")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(NrrError::Validation(format!("probabilities sum to {sum}")));
    }
    Ok(p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum())
}

/// Fraction of positions where `predictions[i] == golds[i]`.
pub fn accuracy(predictions: &[usize], golds: &[usize]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(NrrError::Validation("accuracy of an empty set".into()));
    }
    if predictions.len() != golds.len() {
        return Err(NrrError::shape("accuracy", predictions.len(), golds.len()));
    }
    let hits = predictions.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// Evaluation of one trained model under one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    /// Mean entropy of the Turn 1 (neutralized) predictions.
    pub turn1_entropy_mean: f64,
    /// Mean gate entropy on neutralized input; absent for gate-less models.
    pub gate_entropy_mean: Option<f64>,
    /// Accuracy with the contextual Turn 2 present.
    pub context_accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Self {
        Self {
            mean: mean(xs),
            std: if xs.len() > 1 { sample_std(xs) } else { 0.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: String,
    pub seeds: Vec<u64>,
    pub turn1_entropy: MeanStd,
    pub gate_entropy: Option<MeanStd>,
    pub context_accuracy: MeanStd,
}

impl ModelSummary {
    pub fn from_results(model: &str, results: &[SeedResult]) -> Result<Self> {
        if results.len() < 2 {
            return Err(NrrError::Validation(format!(
                "{model}: aggregation needs at least 2 seeds, got {}",
                results.len()
            )));
        }
        let pick = |f: fn(&SeedResult) -> f64| results.iter().map(f).collect::<Vec<_>>();
        let gates: Option<Vec<f64>> = results.iter().map(|r| r.gate_entropy_mean).collect();
        Ok(Self {
            model: model.to_string(),
            seeds: results.iter().map(|r| r.seed).collect(),
            turn1_entropy: MeanStd::of(&pick(|r| r.turn1_entropy_mean)),
            gate_entropy: gates.as_deref().map(MeanStd::of),
            context_accuracy: MeanStd::of(&pick(|r| r.context_accuracy)),
        })
    }
}

/// Per-model aggregates plus Welch's t on Turn 1 entropy (`first − second`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub models: Vec<ModelSummary>,
    pub t_statistic: f64,
    pub degrees_of_freedom: f64,
    pub p_value: f64,
}

pub fn aggregate(
    (first_name, first): (&str, &[SeedResult]),
    (second_name, second): (&str, &[SeedResult]),
) -> Result<SweepSummary> {
    let seeds = |rs: &[SeedResult]| rs.iter().map(|r| r.seed).collect::<Vec<_>>();
    if seeds(first) != seeds(second) {
        return Err(NrrError::Validation(format!(
            "seed sets differ: {first_name} {:?} vs {second_name} {:?}",
            seeds(first),
            seeds(second)
        )));
    }
    let a = ModelSummary::from_results(first_name, first)?;
    let b = ModelSummary::from_results(second_name, second)?;
    let ent = |rs: &[SeedResult]| rs.iter().map(|r| r.turn1_entropy_mean).collect::<Vec<_>>();
    let test = welch_t(&ent(first), &ent(second))?;
    Ok(SweepSummary {
        models: vec![a, b],
        t_statistic: test.t,
        degrees_of_freedom: test.df,
        p_value: test.p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(&[0.5, 0.5]).unwrap(), LN_2);
        assert_eq!(entropy(&[1.0, 0.0]).unwrap(), 0.0);
        // −0.9 ln 0.9 − 0.1 ln 0.1
        assert!((entropy(&[0.9, 0.1]).unwrap() - 0.325_082_973_391_448_2).abs() < 1e-15);
    }

    #[test]
    fn entropy_rejects_invalid_input() {
        assert!(entropy(&[0.6, 0.6]).is_err());
        assert!(entropy(&[1.2, -0.2]).is_err());
        assert!(entropy(&[f64::NAN, 1.0]).is_err());
        assert!(entropy(&[]).is_err());
    }

    #[test]
    fn accuracy_counts() {
        assert_eq!(accuracy(&[0, 1, 1], &[0, 1, 1]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 0], &[0, 1]).unwrap(), 0.0);
        let golds = vec![0usize; 200];
        let mut preds = golds.clone();
        preds[17] = 1;
        assert_eq!(accuracy(&preds, &golds).unwrap(), 0.995);
        assert!(accuracy(&[], &[]).is_err());
        assert!(accuracy(&[0], &[0, 1]).is_err());
    }

    fn result(seed: u64, h: f64) -> SeedResult {
        SeedResult {
            seed,
            turn1_entropy_mean: h,
            gate_entropy_mean: Some(LN_2),
            context_accuracy: 1.0,
        }
    }

    #[test]
    fn identical_results_have_zero_std() {
        let rs: Vec<_> = (0..5).map(|s| result(s, 0.6)).collect();
        let m = ModelSummary::from_results("m", &rs).unwrap();
        assert_eq!(m.turn1_entropy.std, 0.0);
        assert_eq!(m.gate_entropy.unwrap().mean, LN_2);
    }

    #[test]
    fn aggregate_is_deterministic_and_checks_seeds() {
        let a: Vec<_> = [0.61, 0.64, 0.62, 0.66, 0.60]
            .iter()
            .enumerate()
            .map(|(s, &h)| result(s as u64, h))
            .collect();
        let b: Vec<_> = [0.05, 0.2, 0.01, 0.12, 0.09]
            .iter()
            .enumerate()
            .map(|(s, &h)| SeedResult {
                gate_entropy_mean: None,
                ..result(s as u64, h)
            })
            .collect();
        let s1 = aggregate(("nrr-lite", &a), ("baseline", &b)).unwrap();
        let s2 = aggregate(("nrr-lite", &a), ("baseline", &b)).unwrap();
        assert_eq!(s1, s2);
        assert!(s1.t_statistic > 6.0 && s1.p_value < 0.01);
        assert!(s1.models[1].gate_entropy.is_none());

        let shifted: Vec<_> = b
            .iter()
            .map(|r| SeedResult {
                seed: r.seed + 1,
                ..r.clone()
            })
            .collect();
        assert!(aggregate(("nrr-lite", &a), ("baseline", &shifted)).is_err());
        assert!(aggregate(("x", &a[..1]), ("y", &b[..1])).is_err());
    }

    /// Neumaier-compensated sum of −p·ln p, with ln(1 − q) for p near 1.
    fn entropy_oracle(p: &[f64]) -> f64 {
        let mut sum = 0.0f64;
        let mut comp = 0.0f64;
        for &v in p {
            if v <= 0.0 {
                continue;
            }
            let ln = if v > 0.5 { (v - 1.0).ln_1p() } else { v.ln() };
            let term = -v * ln;
            let t = sum + term;
            if sum.abs() >= term.abs() {
                comp += (sum - t) + term;
            } else {
                comp += (term - t) + sum;
            }
            sum = t;
        }
        sum + comp
    }

    #[test]
    fn entropy_matches_compensated_oracle() {
        let mut rng = crate::kernel::RngStream::new(2024);
        for _ in 0..1000 {
            let k = 2 + rng.below(15);
            let w: Vec<f64> = (0..k).map(|_| rng.next_f64().powi(3)).collect();
            let s: f64 = w.iter().sum();
            let p: Vec<f64> = w.iter().map(|x| x / s).collect();
            assert!((entropy(&p).unwrap() - entropy_oracle(&p)).abs() < 1e-10);
        }
    }

    proptest! {
        #[test]
        fn entropy_bounded_and_permutation_invariant(
            w in proptest::collection::vec(0.0f64..1.0, 2..10),
        ) {
            let s: f64 = w.iter().sum();
            prop_assume!(s > 1e-6);
            let p: Vec<f64> = w.iter().map(|x| x / s).collect();
            let h = entropy(&p).unwrap();
            prop_assert!(h >= 0.0 && h <= (p.len() as f64).ln() + 1e-12);
            let mut rev = p.clone();
            rev.reverse();
            prop_assert!((entropy(&rev).unwrap() - h).abs() < 1e-12);
        }

        #[test]
        fn uniform_is_the_unique_maximum(k in 2usize..8, i in 0usize..8, delta in 1e-4f64..0.05) {
            let i = i % k;
            let j = (i + 1) % k;
            let mut p = vec![1.0 / k as f64; k];
            let uniform = entropy(&p).unwrap();
            p[i] += delta.min(p[j]);
            p[j] -= delta.min(p[j]);
            prop_assert!(entropy(&p).unwrap() < uniform);
        }
    }
}
