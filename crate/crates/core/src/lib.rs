//! Quanvolutional feature extraction feeding a RetinaNet-style detector,
//! with the training loop, evaluation metrics and a synthetic dataset.

pub mod data;
pub mod detector;
pub mod error;
pub mod metrics;
pub mod qsim;
pub mod quanv;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::FeatureTensor;

/// Canonical class roster, in index order.
pub const CLASS_NAMES: [&str; 4] = ["short_range_rifle", "shotgun", "pistol", "knife"];
