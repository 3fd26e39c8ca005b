//! Deterministic linear algebra and randomness primitives.

pub mod eigen;
pub mod matrix;
pub mod rng;

pub use eigen::{energy_rank, pca_truncate, project, project_complement, sym_eigen, EigenResult};
pub use matrix::Matrix;
pub use rng::SeededRng;
