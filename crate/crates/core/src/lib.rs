//! Soft Bayesian additive regression trees.
//!
//! A regression function is modelled as a sum of trees whose decision rules
//! are smoothed by a logistic gate, so each observation reaches every leaf
//! with some probability. Fitting is by Bayesian backfitting MCMC with a
//! sparsity-inducing Dirichlet prior on the splitting proportions.

pub mod config;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod gating;
pub mod inference;
pub mod likelihood;
pub mod persist;
pub mod preprocess;
pub mod priors;
pub mod random;
pub mod sampler;
pub mod simulate;
pub mod trace;
pub mod tree;

#[cfg(feature = "oracle")]
pub mod oracle;

pub use config::{FitConfig, MoveProbs};
pub use data::{ResponseTransform, TrainingData};
pub use ensemble::{total_split_counts, Ensemble};
pub use error::{Result, SbartError};
pub use inference::FittedModel;
pub use trace::{ChainDiagnostics, PosteriorDraw, Trace};
pub use tree::{Node, NodeId, NodeKind, SoftTree};
