//! End-to-end pipeline on synthetic scenes: samples, forward pass,
//! training, evaluation and dataset directories.

mod dataset;
mod eval;
mod forward;
mod sample;
mod train;

pub use dataset::{generate_dataset, load_dataset, verify_manifest, Manifest, ManifestEntry};
pub use eval::{evaluate, write_eval_outputs, EvalOutcome, SampleEval, STATIC_GROUP, ALL_GROUP};
pub use forward::{frame_warp, predict_sample, Model, Predictions, Selection};
pub use sample::{build_samples, derive_seed, Sample};
pub use train::{save_loss_csv, train_model, write_loss_csv, LossRow, TrainOutcome};
