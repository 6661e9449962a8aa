//! Tabular episodic RL with low global switching cost.
//!
//! Exact tabular MDPs, an explicit version space of deterministic policies,
//! the absorbing-kernel estimator, crude and fine exploration, and the
//! elimination and reward-free learners built on them. Regret is accounted
//! exactly from the true environment by dynamic programming.

pub mod algorithms;
pub mod envs;
pub mod error;
pub mod estimation;
pub mod exploration;
pub mod hard_instances;
pub mod harness;
pub mod mdp;
pub mod metrics;
pub mod parallel;
pub mod policy_space;
pub mod rng;

pub use algorithms::{run_algorithm, Algorithm, AlgorithmOptions, ExperimentReport, StageSchedule};
pub use envs::EnvSource;
pub use error::{Error, Result};
pub use mdp::{RewardFunction, TabularMdp};
pub use parallel::ExecMode;
pub use policy_space::{DeterministicPolicy, PolicyShape, StochasticPolicy, VersionSpace};
