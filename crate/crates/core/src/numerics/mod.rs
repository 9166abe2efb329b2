//! Tensor arithmetic, reverse-mode differentiation, optimizers, schedules
//! and seeded randomness.

pub mod gradcheck;
pub mod kernels;
pub mod optim;
pub mod rng;
mod scalar;
pub mod schedule;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, grad_check_many};
pub use optim::{clip_global_norm, AdamW, AdamWConfig, Moments, ParamUpdate, Sgd};
pub use rng::SeedRng;
pub use scalar::{DType, Scalar};
pub use schedule::LrSchedule;
pub use tape::{softmax_rows, Gradients, Tape, Var};
pub use tensor::Tensor;

/// Layer-norm epsilon used throughout the model.
pub const LAYER_NORM_EPS: f64 = 1e-6;
