//! Spectral estimation and inference for multi-layer stochastic block models.
//!
//! Pipeline: aggregate `sum_l (A_l^2 - D_l)`, take its leading `K`
//! eigenvectors `Uhat`, form per-layer score matrices `Mhat_l = Uhat^T A_l Uhat`,
//! and attach plug-in covariances for intervals and homogeneity tests.

pub mod embedding;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod generator;
pub mod inference;
mod linalg;
pub mod model;
pub mod rng;

pub use embedding::{EigenspaceEstimate, EmbeddingMethod};
pub use error::{Result, ScceError};
pub use estimator::{AlignmentResult, CovarianceEstimate, ScoreEstimate};
pub use generator::{BlockModelSpec, PopulationDecomposition};
pub use inference::{HolmOutcome, IntervalEstimate, PairTestResult};
pub use model::{MultiLayerNetwork, SymKxK, VecUT};
