//! Per-cell toy predictors and their focal-loss supervision.
//!
//! Image-level heads read handcrafted features; BEV heads read the
//! aggregated BEV feature map. Static heads use independent sigmoids
//! (multi-label), object heads a softmax over background plus classes.

mod features;
mod head;
mod loss;
mod optim;

pub use features::{extract_features, FeatureExtractorConfig, FEATURE_NAMES};
pub use head::{Activation, HeadGradient, Lattice, LinearHead};
pub use loss::{class_frequency_alpha, focal_loss, FocalLoss, PROB_FLOOR};
pub use optim::{Optimizer, OptimizerKind, OptimizerState};
