//! Optimizer, schedule and the epoch loop.

mod fit;
mod optim;

pub use fit::{evaluate, fit, EpochRecord, Evaluation, FitOptions, History};
pub use optim::{adam_step, clip_global_norm, clip_store_grads, lr_at, OptimizerState, TrainConfig};
