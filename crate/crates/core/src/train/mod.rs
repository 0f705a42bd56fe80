//! Training loop, optimizers and evaluation metrics.

mod metrics;
mod optim;
mod trainer;

pub use metrics::{f1_score, Metrics};
pub use optim::{step_adam, step_sgd, AdamConfig, AdamState, Optimizer, OptimizerKind};
pub use trainer::{
    evaluate, predict_all, train, train_with_validation, EpochRecord, History, TrainConfig,
};
