//! Dense layers with explicit forward traces.
//!
//! A forward pass returns a trace holding every intermediate the backward
//! pass needs, and `backward` consumes a reference to that trace. Running a
//! backward pass without a matching forward is therefore a type error rather
//! than a runtime state error.

use serde::{Deserialize, Serialize};

use crate::error::{NrrError, Result};
use crate::kernel::ops::{affine_forward, Activation};
use crate::kernel::rng::RngStream;
use crate::kernel::tensor::{axpy, Mat, Param, Parameterized};

#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub weight: Param,
    pub bias: Param,
}

impl Affine {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Param::new(Mat::zeros(output, input)),
            bias: Param::new(Mat::zeros(output, 1)),
        }
    }

    pub fn uniform(input: usize, output: usize, scale: f64, rng: &mut RngStream) -> Self {
        Self {
            weight: Param::new(Mat::uniform(output, input, -scale, scale, rng)),
            bias: Param::new(Mat::uniform(output, 1, -scale, scale, rng)),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.value.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.value.rows()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        affine_forward(x, &self.weight.value, self.bias.value.data())
    }

    /// Accumulates `dW += dy ⊗ x`, `db += dy` and returns `Wᵀ·dy`.
    pub fn backward(&mut self, x: &[f64], dy: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() || dy.len() != self.output_dim() {
            return Err(NrrError::shape(
                "Affine::backward",
                self.weight.value.shape_str(),
                format!("x {} / dy {}", x.len(), dy.len()),
            ));
        }
        self.weight.grad.add_outer(1.0, dy, x);
        axpy(1.0, dy, self.bias.grad.data_mut());
        self.weight.value.matvec_t(dy)
    }
}

impl Parameterized for Affine {
    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpShape {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
    pub activation: Activation,
}

/// Two affine layers with a nonlinearity between them; emits logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub shape: MlpShape,
    pub first: Affine,
    pub second: Affine,
}

/// Intermediates of one [`Mlp::forward`] call.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    pub input: Vec<f64>,
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
}

impl Mlp {
    pub fn zeros(shape: MlpShape) -> Self {
        Self {
            shape,
            first: Affine::zeros(shape.input, shape.hidden),
            second: Affine::zeros(shape.hidden, shape.output),
        }
    }

    pub fn uniform(shape: MlpShape, scale: f64, rng: &mut RngStream) -> Self {
        Self {
            shape,
            first: Affine::uniform(shape.input, shape.hidden, scale, rng),
            second: Affine::uniform(shape.hidden, shape.output, scale, rng),
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<MlpTrace> {
        let pre = self.first.forward(x)?;
        let hidden: Vec<f64> = pre.iter().map(|&v| self.shape.activation.apply(v)).collect();
        let logits = self.second.forward(&hidden)?;
        Ok(MlpTrace {
            input: x.to_vec(),
            hidden,
            logits,
        })
    }

    /// Accumulates parameter gradients for upstream `d_logits`; returns `dL/dx`.
    pub fn backward(&mut self, trace: &MlpTrace, d_logits: &[f64]) -> Result<Vec<f64>> {
        let d_hidden = self.second.backward(&trace.hidden, d_logits)?;
        let d_pre: Vec<f64> = d_hidden
            .iter()
            .zip(&trace.hidden)
            .map(|(g, &h)| g * self.shape.activation.derivative_from_output(h))
            .collect();
        self.first.backward(&trace.input, &d_pre)
    }
}

impl Parameterized for Mlp {
    fn params(&self) -> Vec<&Param> {
        let mut p = self.first.params();
        p.extend(self.second.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.first.params_mut();
        p.extend(self.second.params_mut());
        p
    }
}
