//! The learners: APEVE, APEVE+, LARFE and explore-first.

mod elimination;
mod larfe;
mod report;
mod schedule;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use elimination::{run_apeve, run_apeve_plus, EliminationConfig};
pub use larfe::{explore_first, explore_first_budget, larfe_split, run_larfe, run_larfe_experiment, LarfeOutput};
pub use report::{pac_mixture_output, EpisodeValue, ExperimentReport, KernelSnapshot, StageRecord, REGRET_SLACK};
pub use schedule::{ScheduleKind, StageSchedule};

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;
use crate::parallel::ExecMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Apeve,
    ApevePlus,
    Larfe,
    ExploreFirst,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Apeve, Algorithm::ApevePlus, Algorithm::Larfe, Algorithm::ExploreFirst];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Apeve => "apeve",
            Algorithm::ApevePlus => "apeve-plus",
            Algorithm::Larfe => "larfe",
            Algorithm::ExploreFirst => "explore-first",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| {
            Error::invalid(format!("unknown algorithm `{s}` (expected apeve, apeve-plus, larfe or explore-first)"))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmOptions {
    pub delta: f64,
    /// Multiplier of the elimination radius.
    pub c_const: f64,
    pub seed: u64,
    /// Deploy per-layer (crude) or per-call (fine) uniform mixtures.
    pub mixture: bool,
    pub exec: ExecMode,
}

impl Default for AlgorithmOptions {
    fn default() -> Self {
        Self { delta: 0.1, c_const: 1.0, seed: 0, mixture: false, exec: ExecMode::Sequential }
    }
}

impl AlgorithmOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if self.c_const.is_nan() || self.c_const <= 0.0 {
            return Err(Error::invalid(format!("C must be positive, got {}", self.c_const)));
        }
        Ok(())
    }
}

pub(crate) fn check_env(env: &TabularMdp) -> Result<()> {
    if env.absorbing().is_some() {
        return Err(Error::invalid("the environment must not declare an absorbing state"));
    }
    Ok(())
}

/// Runs `algorithm` for `budget` episodes and checks the report invariants.
pub fn run_algorithm(algorithm: Algorithm, env: &TabularMdp, budget: u64, opts: &AlgorithmOptions) -> Result<ExperimentReport> {
    let report = match algorithm {
        Algorithm::Apeve => run_apeve(env, budget, opts)?,
        Algorithm::ApevePlus => run_apeve_plus(env, budget, opts)?,
        Algorithm::Larfe => run_larfe_experiment(env, budget, opts)?,
        Algorithm::ExploreFirst => explore_first(env, budget, opts)?,
    };
    report.check_invariants()?;
    Ok(report)
}
