//! Tag-aware rating prediction with diffusion-regularized matrix factorization.
//!
//! The pipeline is:
//!
//! 1. [`ingest`] parses rating and tagging files into a [`Dataset`] with dense ids
//!    and produces seeded cross-validation folds.
//! 2. [`weighting`] turns train ratings into per-user z-scores and tag counts into
//!    BM25 scores.
//! 3. [`diffusion`] builds the weighted user–item–tag tripartite graph, computes
//!    resource-allocation similarities on both layers and selects the top-k
//!    similar users of every user.
//! 4. [`mf`] trains a logistic matrix factorization model by SGD, optionally with
//!    a penalty pulling each user's latent vector toward its neighbors.
//! 5. [`eval`] runs cross-validated experiments, parameter sweeps, paired t-tests
//!    and per-user-group breakdowns.

pub mod dataset;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod mf;
pub mod seed;
pub mod synthetic;
pub mod weighting;

pub use dataset::{Dataset, RatingTable, TagTable};
pub use diffusion::{DiffusionConfig, NeighborSets, WeightedTripartiteGraph};
pub use error::{Error, Result};
pub use mf::{FactorModel, TrainConfig};
