//! End-to-end workflows behind the command line: configuration, training,
//! evaluation, inference and the verification suites.

mod config;
mod eval;
mod train;
pub mod verify;

pub use config::{ClassWeighting, RunConfig, SEED_ENV};
pub use eval::{class_names, evaluate, metrics_file_name, predict_image, run_eval, run_infer, InferRequest};
pub use train::{
    checkpoint_name, format_log, prepare_crops, run_train, tile_size_for, train_network, weights_path, Crop,
    StepRecord, TrainOutputs, TrainReport, LOG_FILE, WEIGHTS_FILE,
};
