//! Dense bottleneck + head classifiers trained from scratch: forward and
//! backward passes, cross-entropy losses, momentum SGD with warmup, and a
//! finite-difference gradient checker.
//!
//! Bottleneck layers use ReLU; the head emits raw logits. All arithmetic is
//! `f64` and single-threaded, so a training run is bit-reproducible.

mod gradcheck;
mod loss;
mod matrix;
mod model;
mod optim;
mod train;

pub use gradcheck::{check_gradients, check_gradients_with, relative_error, GradCheckReport, RELATIVE_ERROR_FLOOR};
pub use loss::{loss_and_grad, loss_value, smooth_distribution, softmax, softmax_rows, LossKind, Targets, PROB_FLOOR};
pub use matrix::Matrix;
pub use model::{forward, ArchitectureSpec, DenseLayer, ModelParams};
pub use optim::{lr_at_step, sgd_step, warmup_steps};
pub use train::{fit, FitSummary, TrainConfig};
