//! Small constructed demonstrations of attention, context tracking and
//! resolution, printed as text or CSV.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use anyhow::Result;

use nrr_core::cit::{similarity, ContextTracker, IdentityLedger};
use nrr_core::kernel::Mat;
use nrr_core::models::InterpretationSet;
use nrr_core::nca::{forward, AttentionConfig, AttentionMode, AttentionParams};
use nrr_core::resolve::{resolve, ResolutionMode, ResolutionPolicy};

fn matrix_csv(out: &mut String, m: &Mat) {
    let header: Vec<String> = (0..m.cols()).map(|c| format!("key{c}")).collect();
    let _ = writeln!(out, "query,{}", header.join(","));
    for r in 0..m.rows() {
        let row: Vec<String> = m.row(r).iter().map(|a| format!("{a:.6}")).collect();
        let _ = writeln!(out, "{r},{}", row.join(","));
    }
}

fn attention_block(out: &mut String, title: &str, inputs: &[Mat], params: &AttentionParams, d: usize) -> Result<()> {
    for mode in [AttentionMode::Sigmoid, AttentionMode::Softmax] {
        let trace = forward(inputs, params, &AttentionConfig::new(d, mode))?;
        let sums: Vec<String> = trace.row_sums().iter().map(|s| format!("{s:.6}")).collect();
        let _ = writeln!(out, "# {title}, {mode:?} (row sums: {})", sums.join(", "));
        matrix_csv(out, &trace.weights);
        out.push('\n');
    }
    Ok(())
}

/// Two cases: all scores zero, and two positions holding the same long vector.
pub fn nca() -> Result<String> {
    let d = 4;
    let mut out = String::new();

    let mut zero_q = AttentionParams::identity(d);
    zero_q.wq.value.fill(0.0);
    let x = Mat::from_rows(&[&[1.0, 0.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 0.0]])?;
    attention_block(&mut out, "equal scores", &[x.clone(), x], &zero_q, d)?;

    let y = Mat::from_rows(&[&[3.0, 3.0, 3.0, 3.0]])?;
    attention_block(
        &mut out,
        "identical keys",
        &[y.clone(), y],
        &AttentionParams::identity(d),
        d,
    )?;
    Ok(out)
}

pub const CIT_SCRIPT: [&str; 4] = [
    "the bank is solid",
    "the bank is old",
    "i can see the ducks",
    "the ducks are near the bank",
];

/// Bag-of-words encoding over the script's own vocabulary.
fn encode_turns(turns: &[&str]) -> Vec<Vec<f64>> {
    let mut index = BTreeMap::new();
    for t in turns {
        for w in t.split_whitespace() {
            let next = index.len();
            index.entry(w).or_insert(next);
        }
    }
    turns
        .iter()
        .map(|t| {
            let mut v = vec![0.0; index.len()];
            for w in t.split_whitespace() {
                v[index[w]] += 1.0;
            }
            v
        })
        .collect()
}

/// Tracks contexts over a scripted dialogue and ledgers `bank` per context.
pub fn cit(tau: f64) -> Result<String> {
    let mut tracker = ContextTracker::new(tau)?;
    let mut ledger = IdentityLedger::new();
    let mut out = String::new();
    let _ = writeln!(out, "tau = {tau}");
    let encodings = encode_turns(&CIT_SCRIPT);
    let mut prev = None;
    for (turn, (text, h)) in CIT_SCRIPT.iter().zip(&encodings).enumerate() {
        let id = tracker.observe(h)?;
        if let Some(p) = prev {
            if p != id {
                let _ = writeln!(out, "context {p} → context {id}");
            }
        }
        let _ = writeln!(out, "turn {}: context {id}  \"{text}\"", turn + 1);
        if text.split_whitespace().any(|w| w == "bank") {
            ledger.record_identity("bank", id, h)?;
        }
        prev = Some(id);
    }
    let contexts = ledger.contexts_of("bank");
    let _ = writeln!(out, "bank recorded in contexts {contexts:?}");
    if let [first, .., last] = contexts[..] {
        let a = ledger.lookup("bank", first)?.vector;
        let b = ledger.lookup("bank", last)?.vector;
        let _ = writeln!(
            out,
            "similarity(bank@{first}, bank@{last}) = {:.4}",
            similarity(&a, &b)?
        );
    }
    Ok(out)
}

fn gate_set(gate: Vec<f64>) -> InterpretationSet {
    let k = gate.len();
    InterpretationSet {
        variants: vec![Vec::new(); k],
        per_variant_probs: vec![vec![0.5, 0.5]; k],
        fused_probs: vec![0.5, 0.5],
        gate,
    }
}

/// Outcomes for a few gates across dominance thresholds, with stable context.
pub fn resolve_demo(thetas: &[f64]) -> Result<String> {
    let gates = [vec![0.5, 0.5], vec![0.7, 0.3], vec![0.05, 0.95]];
    let drift = [0.0, 0.0];
    let mut out = String::new();
    for gate in gates {
        let set = gate_set(gate.clone());
        for &theta in thetas {
            let policy = ResolutionPolicy {
                mode: ResolutionMode::Generate,
                dominance_theta: theta,
                ..Default::default()
            };
            let o = resolve(&set, &policy, &drift)?;
            let _ = writeln!(out, "gate {gate:?} generate θ={theta}: {o}");
        }
        for mode in [ResolutionMode::Classify, ResolutionMode::Defer] {
            let policy = ResolutionPolicy {
                mode,
                ..Default::default()
            };
            let o = resolve(&set, &policy, &drift)?;
            let _ = writeln!(out, "gate {gate:?} {mode:?}: {o}");
        }
    }
    Ok(out)
}
