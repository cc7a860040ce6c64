//! GRU surrogate for the reduced coefficients: feed-forward input layer,
//! one gated recurrent layer and a feed-forward output stack.

pub mod files;
pub mod grad;
pub mod model;
pub mod train;

pub use files::{load_model, save_model, write_loss_csv, write_sweep_csv};
pub use grad::{backward_sequence, gradient_check, mse_loss, sample_loss, Gradient, LossSpace};
pub use model::{gru_cell, NormStats, RnnDims, RnnModel, RnnParams, RnnStepper, SequenceSample};
pub use train::{
    adam_step, evaluate, hyper_sweep, train, AdamState, LossRecord, ModelInit, SweepGrid, SweepRow,
    TrainConfig, TrainResult,
};
