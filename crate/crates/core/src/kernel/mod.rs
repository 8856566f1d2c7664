//! Small deterministic differentiable kernel: dense matrices, activations,
//! losses, hand-written backward passes, optimizers and gradient checking.

pub mod gradcheck;
pub mod layers;
pub mod ops;
pub mod optim;
pub mod rng;
pub mod tensor;

pub use gradcheck::{finite_diff_check, relative_error};
pub use layers::{Affine, Mlp, MlpShape, MlpTrace};
pub use ops::{
    activations, affine_forward, argmax, cross_entropy, cross_entropy_backward, sigmoid, softmax, softmax_backward,
    softmax_cross_entropy_backward, Activation,
};
pub use optim::{clip_grad_norm, Optimizer, OptimizerConfig, OptimizerKind, StepReport};
pub use rng::RngStream;
pub use tensor::{axpy, dot, norm, Mat, Param, Parameterized};
