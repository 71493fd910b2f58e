//! Governance kernels for cooperative multi-agent reinforcement learning.
//!
//! Reward fields built from parametric kernels are injected through a
//! governance layer into sparse cooperative environments, and kernel
//! configurations are searched with repeated Hyperband rounds.

pub mod env;
pub mod error;
pub mod governance;
pub mod harness;
pub mod kernel;
pub mod learner;
pub mod scheduler;

/// Deterministic generator used everywhere randomness is needed.
pub type SimRng = rand_chacha::ChaCha8Rng;

pub use error::{Error, Result};
pub use kernel::{
    build_reward_field, eval_kernel, mutate, normalize_field, sample_kernel_population,
    superimpose, Anchor, AnchorContext, DomainDescriptor, KernelFamily, KernelSpec, Owner,
    RewardField, Scope, SignMode,
};
