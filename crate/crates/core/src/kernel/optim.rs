use serde::{Deserialize, Serialize};

use crate::error::{NrrError, Result};
use crate::kernel::tensor::Param;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: Some(5.0),
        }
    }
}

impl OptimizerConfig {
    pub fn sgd(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            lr,
            clip_norm: None,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.clip_norm.is_none_or(|c| c > 0.0);
        if ok {
            Ok(())
        } else {
            Err(NrrError::Config(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// Euclidean norm of all gradients taken together.
pub fn global_grad_norm(params: &[&mut Param]) -> f64 {
    params
        .iter()
        .flat_map(|p| p.grad.data().iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt()
}

/// Rescales every gradient by `max_norm / norm` when the global norm exceeds
/// `max_norm`. Returns the pre-clip norm.
pub fn clip_grad_norm(params: &mut [&mut Param], max_norm: f64) -> f64 {
    let norm = global_grad_norm(params);
    if norm > max_norm {
        let scale = max_norm / norm;
        for p in params.iter_mut() {
            p.grad.data_mut().iter_mut().for_each(|g| *g *= scale);
        }
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub grad_norm: f64,
    pub clipped: bool,
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    config: OptimizerConfig,
    step: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            step: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Clip, update, then zero the gradients. Parameters must be passed in the
    /// same order on every call.
    pub fn step(&mut self, mut params: Vec<&mut Param>) -> Result<StepReport> {
        for (i, p) in params.iter().enumerate() {
            if let Some(bad) = p.grad.data().iter().position(|g| !g.is_finite()) {
                return Err(NrrError::NonFinite(format!(
                    "gradient of parameter {i} ({}) at index {bad} is {}; step {} aborted",
                    p.value.shape_str(),
                    p.grad.data()[bad],
                    self.step + 1
                )));
            }
        }

        let grad_norm = match self.config.clip_norm {
            Some(max) => clip_grad_norm(&mut params, max),
            None => global_grad_norm(&params),
        };
        let clipped = self.config.clip_norm.is_some_and(|max| grad_norm > max);

        self.step += 1;
        match self.config.kind {
            OptimizerKind::Sgd => {
                let lr = self.config.lr;
                for p in params.iter_mut() {
                    let Param { value, grad } = &mut **p;
                    for (v, g) in value.data_mut().iter_mut().zip(grad.data()) {
                        *v -= lr * g;
                    }
                }
            }
            OptimizerKind::Adam => self.adam_update(&mut params),
        }

        for p in params.iter_mut() {
            p.zero_grad();
        }
        Ok(StepReport { grad_norm, clipped })
    }

    fn adam_update(&mut self, params: &mut [&mut Param]) {
        if self.first_moment.len() != params.len() {
            self.first_moment = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.second_moment = params.iter().map(|p| vec![0.0; p.len()]).collect();
        }
        let OptimizerConfig {
            lr, beta1, beta2, eps, ..
        } = self.config;
        let t = self.step as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);

        for ((p, m), v) in params
            .iter_mut()
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            let Param { value, grad } = &mut **p;
            for (((w, &g), mi), vi) in value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = beta1 * *mi + (1.0 - beta1) * g;
                *vi = beta2 * *vi + (1.0 - beta2) * g * g;
                let m_hat = *mi / bias1;
                let v_hat = *vi / bias2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::tensor::Mat;

    fn scalar(v: f64, g: f64) -> Param {
        let mut p = Param::new(Mat::from_vec(1, 1, vec![v]).unwrap());
        p.grad.data_mut()[0] = g;
        p
    }

    #[test]
    fn sgd_step() {
        let mut p = scalar(1.0, 1.0);
        let mut opt = Optimizer::new(OptimizerConfig::sgd(0.1)).unwrap();
        opt.step(vec![&mut p]).unwrap();
        assert!((p.value.data()[0] - 0.9).abs() < 1e-15);
        assert_eq!(p.grad.data()[0], 0.0);
    }

    #[test]
    fn clipping_rescales_to_unit_norm() {
        let mut p = Param::new(Mat::zeros(2, 1));
        p.grad.data_mut().copy_from_slice(&[3.0, 4.0]);
        let norm = clip_grad_norm(&mut [&mut p], 1.0);
        assert_eq!(norm, 5.0);
        assert!((p.grad.data()[0] - 0.6).abs() < 1e-15);
        assert!((p.grad.data()[1] - 0.8).abs() < 1e-15);

        // through the optimizer: sgd lr=1 moves θ by the clipped gradient
        let mut p = Param::new(Mat::zeros(2, 1));
        p.grad.data_mut().copy_from_slice(&[3.0, 4.0]);
        let mut opt = Optimizer::new(OptimizerConfig {
            clip_norm: Some(1.0),
            ..OptimizerConfig::sgd(1.0)
        })
        .unwrap();
        let report = opt.step(vec![&mut p]).unwrap();
        assert!(report.clipped);
        assert!((p.value.data()[0] + 0.6).abs() < 1e-15);
        assert!((p.value.data()[1] + 0.8).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        // m̂ = g, v̂ = g², so the step is lr·g/(|g|+ε) ≈ lr
        let mut p = scalar(1.0, 1.0);
        let mut opt = Optimizer::new(OptimizerConfig::default()).unwrap();
        opt.step(vec![&mut p]).unwrap();
        let moved = 1.0 - p.value.data()[0];
        assert!((moved - 0.01 / (1.0 + 1e-8)).abs() < 1e-15, "{moved}");
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut p = scalar(1.0, f64::NAN);
        let mut opt = Optimizer::new(OptimizerConfig::default()).unwrap();
        let err = opt.step(vec![&mut p]).unwrap_err();
        assert!(matches!(err, NrrError::NonFinite(_)));
        assert_eq!(p.value.data()[0], 1.0);
    }

    #[test]
    fn zero_gradient_leaves_adam_param_untouched() {
        let mut p = scalar(0.0, 0.0);
        let mut q = scalar(1.0, 1.0);
        let mut opt = Optimizer::new(OptimizerConfig::default()).unwrap();
        for _ in 0..10 {
            q.grad.data_mut()[0] = 1.0;
            opt.step(vec![&mut p, &mut q]).unwrap();
        }
        assert_eq!(p.value.data()[0], 0.0);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(Optimizer::new(OptimizerConfig {
            lr: -1.0,
            ..Default::default()
        })
        .is_err());
    }
}
