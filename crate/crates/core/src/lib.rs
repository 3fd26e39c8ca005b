//! Feature transfer learning for classifiers trained on imbalanced data.
//!
//! Under-represented classes are augmented in a rich feature space by
//! transferring intra-class variation from regular classes through a shared
//! PCA basis, and the model is trained with an alternating two-stage schedule.

pub mod cli;
mod codec;
pub mod config;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod network;
pub mod numerics;
pub mod trainer;
pub mod transfer;

pub use error::{FtlError, Result};
