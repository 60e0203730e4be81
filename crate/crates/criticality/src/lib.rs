//! Criticality prediction under extreme class imbalance.
//!
//! A three-stage cascade learns the probability that a safety-critical event
//! occurs within a fixed horizon of the current state:
//!
//! 1. **stage 1** — a reward model trained with a pairwise ranking loss scores
//!    every sample; a recall-calibrated threshold discards the easy negatives.
//! 2. **stage 2** — a bilateral-branch classifier (class-balanced branch +
//!    uniform branch, mixed features, normalized classifier, focal +
//!    cross-entropy loss) separates the survivors.
//! 3. **stage 3** — offline dense DQN over critical episodes only fine-tunes
//!    the classifier's last layers to sharpen the predicted probabilities.
//!
//! The built-in environment ([`env`]) has finite noise support, so ground-truth
//! criticality is exactly computable by enumeration and every stage can be
//! scored against the oracle.

pub mod dataset;
pub mod env;
pub mod error;
pub mod eval;
pub mod model;
pub mod pipeline;
pub mod stage1;
pub mod stage2;
pub mod stage3;

pub use error::{Error, Result};
