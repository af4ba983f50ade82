//! Adam, learning-rate scaling, minibatching and the training loop.

mod adam;
mod batching;
mod train;

pub use adam::{adam_step, scaled_lr, AdamState, BETA1, BETA2, EPSILON};
pub use batching::{make_batches, BatchItem};
pub use train::{
    batch_loss_and_grads, evaluate_records, train, write_history_jsonl, Architecture, EpochRecord, LossKind,
    SelectionMetric, TrainConfig, TrainMode, TrainOutcome,
};
