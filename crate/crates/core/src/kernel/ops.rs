use serde::{Deserialize, Serialize};

use crate::error::{NrrError, Result};
use crate::kernel::tensor::{axpy, Mat};

/// Lower clamp applied to probabilities inside the log of the loss.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the activation output `y = f(x)`.
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn activations(x: &[f64], kind: Activation) -> Vec<f64> {
    x.iter().map(|&v| kind.apply(v)).collect()
}

/// `W·x + b`
pub fn affine_forward(x: &[f64], w: &Mat, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != w.rows() {
        return Err(NrrError::shape(
            "affine_forward",
            w.shape_str(),
            format!("bias {}", b.len()),
        ));
    }
    let mut y = w.matvec(x)?;
    axpy(1.0, b, &mut y);
    Ok(y)
}

/// Max-subtracted softmax.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Vector-Jacobian product of softmax: given `p = softmax(z)` and `dL/dp`,
/// returns `dL/dz = p ⊙ (dp − ⟨p, dp⟩)`.
pub fn softmax_backward(p: &[f64], dp: &[f64]) -> Vec<f64> {
    let inner: f64 = p.iter().zip(dp).map(|(a, b)| a * b).sum();
    p.iter().zip(dp).map(|(pi, di)| pi * (di - inner)).collect()
}

fn check_class(p: &[f64], gold: usize) -> Result<()> {
    if gold >= p.len() {
        return Err(NrrError::Validation(format!(
            "class index {gold} out of range for {} classes",
            p.len()
        )));
    }
    Ok(())
}

/// `−ln p[gold]` with `p` clamped to `[1e-12, 1]`.
pub fn cross_entropy(p: &[f64], gold: usize) -> Result<f64> {
    check_class(p, gold)?;
    Ok(-p[gold].clamp(PROB_FLOOR, 1.0).ln())
}

/// `dL/dp` for [`cross_entropy`]; zero where the clamp is active.
pub fn cross_entropy_backward(p: &[f64], gold: usize) -> Result<Vec<f64>> {
    check_class(p, gold)?;
    let mut dp = vec![0.0; p.len()];
    if p[gold] > PROB_FLOOR {
        dp[gold] = -1.0 / p[gold];
    }
    Ok(dp)
}

/// Combined softmax + cross-entropy gradient w.r.t. logits: `p − onehot(gold)`.
pub fn softmax_cross_entropy_backward(p: &[f64], gold: usize) -> Result<Vec<f64>> {
    check_class(p, gold)?;
    let mut dz = p.to_vec();
    dz[gold] -= 1.0;
    Ok(dz)
}

pub fn argmax(x: &[f64]) -> usize {
    // first maximum wins on ties
    let mut best = 0;
    for (i, &v) in x.iter().enumerate() {
        if v > x[best] {
            best = i;
        }
    }
    best
}
