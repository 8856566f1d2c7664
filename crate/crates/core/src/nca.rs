//! Non-collapsing attention.
//!
//! Inputs are `n` positions, each carrying `k` interpretation vectors of
//! dimension `d` (one `k × d` matrix per position). Every (position,
//! interpretation) pair is both a query and a key, so the weight matrix is
//! `(n·k) × (n·k)` with row/column index `position · k + interpretation`.
//!
//! In [`AttentionMode::Sigmoid`] each weight is activated independently and a
//! query row may sum to anything in `(0, n·k)`. [`AttentionMode::Softmax`] is
//! the normalized control, where each row sums to one.

use serde::{Deserialize, Serialize};

use crate::error::{NrrError, Result};
use crate::kernel::{axpy, dot, norm, sigmoid, softmax, softmax_backward, Mat, Param, Parameterized, RngStream};
use crate::metrics::entropy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionMode {
    Sigmoid,
    Softmax,
}

impl std::str::FromStr for AttentionMode {
    type Err = NrrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(AttentionMode::Sigmoid),
            "softmax" => Ok(AttentionMode::Softmax),
            other => Err(NrrError::Config(format!("unknown attention mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttentionConfig {
    pub d: usize,
    pub mode: AttentionMode,
    /// Output vectors longer than this are rescaled to this norm.
    pub clip_norm: f64,
    /// Coefficient of the `λ·Σα²` strength penalty.
    pub strength_lambda: f64,
}

impl AttentionConfig {
    pub fn new(d: usize, mode: AttentionMode) -> Self {
        Self {
            d,
            mode,
            clip_norm: 10.0,
            strength_lambda: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(NrrError::Config("attention dimension must be positive".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(NrrError::Config("clip_norm must be positive".into()));
        }
        if !(self.strength_lambda >= 0.0) {
            return Err(NrrError::Config("strength_lambda must be non-negative".into()));
        }
        Ok(())
    }
}

/// Query, key and value projections, each `d × d`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub wq: Param,
    pub wk: Param,
    pub wv: Param,
}

impl AttentionParams {
    pub fn identity(d: usize) -> Self {
        Self {
            wq: Param::new(Mat::identity(d)),
            wk: Param::new(Mat::identity(d)),
            wv: Param::new(Mat::identity(d)),
        }
    }

    pub fn uniform(d: usize, scale: f64, rng: &mut RngStream) -> Self {
        Self {
            wq: Param::new(Mat::uniform(d, d, -scale, scale, rng)),
            wk: Param::new(Mat::uniform(d, d, -scale, scale, rng)),
            wv: Param::new(Mat::uniform(d, d, -scale, scale, rng)),
        }
    }

    pub fn dim(&self) -> usize {
        self.wq.value.rows()
    }
}

impl Parameterized for AttentionParams {
    fn params(&self) -> Vec<&Param> {
        vec![&self.wq, &self.wk, &self.wv]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.wq, &mut self.wk, &mut self.wv]
    }
}

/// Forward state kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTrace {
    pub positions: usize,
    pub interpretations: usize,
    /// Flattened inputs, `(n·k) × d`.
    pub inputs: Mat,
    pub queries: Mat,
    pub keys: Mat,
    pub values: Mat,
    /// Activated weights, `(n·k) × (n·k)`.
    pub weights: Mat,
    /// `weights · values` before norm clipping.
    pub mixed: Mat,
    /// Final outputs, `(n·k) × d`.
    pub outputs: Mat,
    pub mode: AttentionMode,
    pub clip_norm: f64,
}

impl AttentionTrace {
    /// Outputs regrouped as one `k × d` matrix per position.
    pub fn output_positions(&self) -> Vec<Mat> {
        unflatten(&self.outputs, self.positions, self.interpretations)
    }

    /// Row sums of the weight matrix, one per query.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.weights.rows())
            .map(|r| self.weights.row(r).iter().sum())
            .collect()
    }
}

fn flatten(inputs: &[Mat], d: usize) -> Result<(Mat, usize)> {
    let k = inputs
        .first()
        .map(Mat::rows)
        .ok_or_else(|| NrrError::Validation("attention needs at least one position".into()))?;
    if k == 0 {
        return Err(NrrError::Validation(
            "attention needs at least one interpretation".into(),
        ));
    }
    let mut data = Vec::with_capacity(inputs.len() * k * d);
    for m in inputs {
        if m.rows() != k || m.cols() != d {
            return Err(NrrError::shape("nca::attend", format!("{k}x{d}"), m.shape_str()));
        }
        data.extend_from_slice(m.data());
    }
    Ok((Mat::from_vec(inputs.len() * k, d, data)?, k))
}

fn unflatten(flat: &Mat, n: usize, k: usize) -> Vec<Mat> {
    let d = flat.cols();
    (0..n)
        .map(|t| {
            let start = t * k * d;
            Mat::from_vec(k, d, flat.data()[start..start + k * d].to_vec()).expect("slice length is k·d")
        })
        .collect()
}

/// Rows of `x` mapped through `w`: `out_r = w · x_r`.
fn project(w: &Mat, x: &Mat) -> Result<Mat> {
    let mut out = Mat::zeros(x.rows(), w.rows());
    for r in 0..x.rows() {
        let y = w.matvec(x.row(r))?;
        out.row_mut(r).copy_from_slice(&y);
    }
    Ok(out)
}

/// Accumulates `dW += Σ_r dy_r ⊗ x_r` and returns `dx_r = Wᵀ dy_r`.
fn project_backward(w: &mut Param, x: &Mat, dy: &Mat) -> Result<Mat> {
    let mut dx = Mat::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        w.grad.add_outer(1.0, dy.row(r), x.row(r));
        let g = w.value.matvec_t(dy.row(r))?;
        dx.row_mut(r).copy_from_slice(&g);
    }
    Ok(dx)
}

/// Runs the layer and keeps everything needed for [`backward`].
pub fn forward(inputs: &[Mat], params: &AttentionParams, cfg: &AttentionConfig) -> Result<AttentionTrace> {
    cfg.validate()?;
    if params.dim() != cfg.d {
        return Err(NrrError::shape("nca::attend", cfg.d, params.dim()));
    }
    let (x, k) = flatten(inputs, cfg.d)?;
    let m = x.rows();
    let queries = project(&params.wq.value, &x)?;
    let keys = project(&params.wk.value, &x)?;
    let values = project(&params.wv.value, &x)?;

    let scale = 1.0 / (cfg.d as f64).sqrt();
    let mut weights = Mat::zeros(m, m);
    for r in 0..m {
        let scores: Vec<f64> = (0..m).map(|c| dot(queries.row(r), keys.row(c)) * scale).collect();
        let row = match cfg.mode {
            AttentionMode::Sigmoid => scores.iter().map(|&s| sigmoid(s)).collect(),
            AttentionMode::Softmax => softmax(&scores),
        };
        weights.row_mut(r).copy_from_slice(&row);
    }

    let mut mixed = Mat::zeros(m, cfg.d);
    for r in 0..m {
        for c in 0..m {
            let a = weights.get(r, c);
            axpy(a, values.row(c), mixed.row_mut(r));
        }
    }
    let mut outputs = mixed.clone();
    for r in 0..m {
        let n = norm(outputs.row(r));
        if n > cfg.clip_norm {
            let f = cfg.clip_norm / n;
            outputs.row_mut(r).iter_mut().for_each(|v| *v *= f);
        }
    }
    Ok(AttentionTrace {
        positions: inputs.len(),
        interpretations: k,
        inputs: x,
        queries,
        keys,
        values,
        weights,
        mixed,
        outputs,
        mode: cfg.mode,
        clip_norm: cfg.clip_norm,
    })
}

/// Convenience wrapper returning per-position outputs and the weight matrix.
pub fn attend(inputs: &[Mat], params: &AttentionParams, cfg: &AttentionConfig) -> Result<(Vec<Mat>, Mat)> {
    let trace = forward(inputs, params, cfg)?;
    Ok((trace.output_positions(), trace.weights))
}

/// Backpropagates `d_outputs` (shape of `trace.outputs`) plus an optional
/// direct gradient on the weights, such as [`strength_penalty_grad`].
/// Accumulates into the parameter gradients and returns the gradient with
/// respect to the flattened inputs.
pub fn backward(
    params: &mut AttentionParams,
    trace: &AttentionTrace,
    d_outputs: &Mat,
    d_weights: Option<&Mat>,
) -> Result<Mat> {
    let m = trace.outputs.rows();
    let d = trace.outputs.cols();
    if d_outputs.shape() != trace.outputs.shape() {
        return Err(NrrError::shape(
            "nca::backward",
            trace.outputs.shape_str(),
            d_outputs.shape_str(),
        ));
    }
    if let Some(dw) = d_weights {
        if dw.shape() != trace.weights.shape() {
            return Err(NrrError::shape(
                "nca::backward",
                trace.weights.shape_str(),
                dw.shape_str(),
            ));
        }
    }

    let mut d_mixed = d_outputs.clone();
    for r in 0..m {
        let o = trace.mixed.row(r);
        let n = norm(o);
        if n > trace.clip_norm {
            let g = d_outputs.row(r);
            let f = trace.clip_norm / n;
            let proj = dot(o, g) / (n * n);
            for (c, v) in d_mixed.row_mut(r).iter_mut().enumerate() {
                *v = f * (g[c] - proj * o[c]);
            }
        }
    }

    let mut d_alpha = Mat::zeros(m, m);
    let mut d_values = Mat::zeros(m, d);
    for r in 0..m {
        for c in 0..m {
            d_alpha.set(r, c, dot(d_mixed.row(r), trace.values.row(c)));
            axpy(trace.weights.get(r, c), d_mixed.row(r), d_values.row_mut(c));
        }
    }
    if let Some(dw) = d_weights {
        for (a, b) in d_alpha.data_mut().iter_mut().zip(dw.data()) {
            *a += b;
        }
    }

    let scale = 1.0 / (d as f64).sqrt();
    let mut d_scores = Mat::zeros(m, m);
    for r in 0..m {
        let alpha = trace.weights.row(r);
        let row: Vec<f64> = match trace.mode {
            AttentionMode::Sigmoid => alpha
                .iter()
                .zip(d_alpha.row(r))
                .map(|(&a, &g)| g * a * (1.0 - a))
                .collect(),
            AttentionMode::Softmax => softmax_backward(alpha, d_alpha.row(r)),
        };
        d_scores.row_mut(r).copy_from_slice(&row);
    }

    let mut d_queries = Mat::zeros(m, d);
    let mut d_keys = Mat::zeros(m, d);
    for r in 0..m {
        for c in 0..m {
            let g = d_scores.get(r, c) * scale;
            if g != 0.0 {
                axpy(g, trace.keys.row(c), d_queries.row_mut(r));
                axpy(g, trace.queries.row(r), d_keys.row_mut(c));
            }
        }
    }

    let mut dx = project_backward(&mut params.wq, &trace.inputs, &d_queries)?;
    let dk = project_backward(&mut params.wk, &trace.inputs, &d_keys)?;
    let dv = project_backward(&mut params.wv, &trace.inputs, &d_values)?;
    for (a, (b, c)) in dx.data_mut().iter_mut().zip(dk.data().iter().zip(dv.data())) {
        *a += b + c;
    }
    Ok(dx)
}

/// `λ · Σ α²` over all weights.
pub fn strength_penalty(weights: &Mat, lambda: f64) -> f64 {
    lambda * weights.data().iter().map(|a| a * a).sum::<f64>()
}

/// Gradient of [`strength_penalty`] with respect to the weights.
pub fn strength_penalty_grad(weights: &Mat, lambda: f64) -> Mat {
    let data = weights.data().iter().map(|a| 2.0 * lambda * a).collect();
    Mat::from_vec(weights.rows(), weights.cols(), data).expect("same shape")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetentionEntropy {
    pub value: f64,
    /// Set when the row summed to zero and no distribution could be formed.
    pub degenerate: bool,
}

/// Entropy of a weight row after normalizing it to sum to one.
pub fn retention_entropy(row: &[f64]) -> Result<RetentionEntropy> {
    if row.iter().any(|&a| a < 0.0 || !a.is_finite()) {
        return Err(NrrError::Validation(
            "attention weights must be finite and non-negative".into(),
        ));
    }
    let total: f64 = row.iter().sum();
    if total == 0.0 {
        return Ok(RetentionEntropy {
            value: 0.0,
            degenerate: true,
        });
    }
    let p: Vec<f64> = row.iter().map(|a| a / total).collect();
    Ok(RetentionEntropy {
        value: entropy(&p)?,
        degenerate: false,
    })
}

/// Retention entropy of every query row.
pub fn retention_entropies(weights: &Mat) -> Result<Vec<RetentionEntropy>> {
    (0..weights.rows()).map(|r| retention_entropy(weights.row(r))).collect()
}
