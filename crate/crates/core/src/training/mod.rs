//! Losses, the Adam optimizer, the early-stopped training loop and checkpoints.

mod adam;
mod checkpoint;
mod loss;
mod trainer;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, ParamEntry, CHECKPOINT_FORMAT};
pub use loss::{coral_loss, hard_ce_loss, head_loss, l1_loss, soft_ce_loss, Criterion};
pub use trainer::{
    dev_score, total_loss, train, train_from, DevScore, EarlyStopping, EpochRecord,
    TrainConfig, TrainOutcome,
};
