//! Training of both students on normal footage only: patch-max loss,
//! step-halving learning rate, Adam updates, checkpoints and resumable runs.

mod adam;
mod data;
mod loss;
mod task;
mod trainer;

pub use adam::Adam;
pub use data::{frame_tensor, prepare_split, PreparedVideo};
pub use loss::{lr_at, mse, patch_loss};
pub use task::{BranchKind, BranchTask, Sample, SegTarget};
pub use trainer::{
    train_branch, train_prepared, LogEntry, TrainOptions, TrainReport, BEST_DIR, FINAL_DIR,
    LOG_FILE,
};
