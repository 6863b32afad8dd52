//! Picard fixed-point iteration of the regularized system and the
//! Wasserstein-1 machinery used to monitor it.

mod hungarian;
mod picard;
mod w1;

pub use hungarian::assignment;
pub use picard::{picard_iterate, trajectory_distance, PicardConfig, PicardState};
pub use w1::{sliced_scale, w1_exact, w1_sliced, W1Method, W1Report, N_EXACT};

use thiserror::Error;

use crate::flow::FlowError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelfConsistentError {
    #[error("total masses differ: {0} vs {1}")]
    MassMismatch(f64, f64),
    #[error("exact W1 limited to {limit} particles, got {got}")]
    TooLarge { got: usize, limit: usize },
    #[error("exact W1 needs equal weights and equal particle counts: {0}")]
    UnequalWeights(String),
    #[error("invalid Picard configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
}
