//! Optimizers, the training loop and evaluation.

mod optim;
mod trainer;

pub use optim::{Adam, Optimizer, Sgd};
pub use trainer::{
    evaluate, evaluate_instances, prepare, train, train_with, EarlyStopping, EpochRecord, Experiment, TrainOutcome, TrainerConfig,
    DEFAULT_BATCH_SIZE, GRAD_CLIP_NORM, LOG_FILE, METRICS_FILE,
};

use crate::registry::{RegistrationError, Registry};

pub(crate) fn register_builtins(registry: &mut Registry) -> Result<(), RegistrationError> {
    optim::register(registry)
}
