//! Training loop, evaluation, checkpoints and complexity accounting.

mod checkpoint;
mod complexity;
mod config;
mod data;
mod evaluate;
mod objective;
mod run;

pub use checkpoint::Checkpoint;
pub use complexity::{count_params_flops, Path};
pub use config::TrainConfig;
pub use data::{all_samples, constants, cube_batch, even_batches, normalized, Prepared};
pub use evaluate::{evaluate, head_outputs, predict, Classifier, HeadOutputs};
pub use objective::{total_loss, Components};
pub use run::{
    dataset_hash, history_csv, train, EpochRecord, FinalMetrics, RunManifest, SetReport, Summary, TrainOutcome,
    Trainer, CSV_HEADER,
};
