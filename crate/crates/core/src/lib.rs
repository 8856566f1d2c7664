//! Ambiguity-preserving representation primitives and the two-turn
//! "bank" disambiguation experiment built on them.
//!
//! - [`kernel`]: dense linear algebra, activations, losses, optimizers, gradient checking
//! - [`dataset`]: synthetic two-turn corpus generation and JSONL I/O
//! - [`models`]: single-embedding baseline and the multi-vector gated classifier
//! - [`nca`]: non-collapsing (sigmoid) attention with a softmax control
//! - [`cit`]: context detection and the per-context identity ledger
//! - [`resolve`]: external policies that collapse an interpretation set
//! - [`metrics`]: entropy, accuracy and Welch's t-test

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cit;
pub mod dataset;
pub mod error;
pub mod kernel;
pub mod metrics;
pub mod models;
pub mod nca;
pub mod resolve;

pub use error::{NrrError, Result};
