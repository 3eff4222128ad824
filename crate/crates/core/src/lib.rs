//! Cluster-based training-data reduction and an adaptive curriculum scheduler.
//!
//! The offline half of the pipeline turns a corpus of embedded, difficulty-scored
//! examples into a compact training set:
//!
//! 1. [`corpus`] ingests examples and attempt logs and scores difficulty,
//! 2. [`features`] PCA-reduces the embeddings, standardizes every dimension and
//!    appends the standardized difficulty,
//! 3. [`clustering`] partitions the fused vectors with seeded k-means,
//! 4. [`reduction`] keeps a few representatives per cluster by greedy
//!    farthest-point sampling.
//!
//! The online half is [`scheduler`], a Thompson-sampling bandit that treats each
//! cluster as an arm and favours clusters the learner currently fails on, and
//! [`sim`], a harness of simulated learners used to check the scheduler's
//! drift and concentration behaviour.
//!
//! The numerical stages are generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below are what the command-line pipeline uses.

pub mod clustering;
pub mod corpus;
mod error;
pub mod features;
pub mod linalg;
pub mod reduction;
pub mod scalar;
pub mod scheduler;
pub mod sim;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix64 = linalg::Matrix<f64>;
pub type PcaModel64 = features::PcaModel<f64>;
pub type Standardizer64 = features::Standardizer<f64>;
pub type FeatureMatrix64 = features::FeatureMatrix<f64>;
pub type ClusterModel64 = clustering::ClusterModel<f64>;

pub type Matrix32 = linalg::Matrix<f32>;
pub type FeatureMatrix32 = features::FeatureMatrix<f32>;
pub type ClusterModel32 = clustering::ClusterModel<f32>;
