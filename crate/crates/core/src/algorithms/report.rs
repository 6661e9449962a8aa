//! Run results with exact expected-regret accounting.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::schedule::StageSchedule;
use super::Algorithm;
use crate::error::{Error, Result};
use crate::estimation::TupleSet;
use crate::exploration::EpisodeTrace;
use crate::mdp::{evaluate_unchecked, optimal_value_and_policy, MdpFile, RewardFunction, TabularMdp};
use crate::metrics::{SwitchCounters, SwitchTracker};
use crate::policy_space::{DeterministicPolicy, StochasticPolicy, VersionSpace};

/// Slack allowed below zero for instantaneous regret (DP rounding).
pub const REGRET_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: u32,
    /// `T_k`
    pub length: u64,
    pub episodes: u64,
    pub crude: bool,
    pub space_before: u64,
    pub eliminated: u64,
    pub space_after: u64,
    pub radius: Option<f64>,
    pub best_estimated_value: Option<f64>,
    pub cum_regret: f64,
    pub cum_global_switches: u64,
    pub cum_local_switches: u64,
    pub batches: u64,
}

/// `F`, `P^int` and `P-hat` of one stage.
#[derive(Debug, Clone, Serialize)]
pub struct KernelSnapshot {
    pub stage: u32,
    pub infrequent: TupleSet,
    pub intermediate: MdpFile,
    pub estimate: MdpFile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpisodeValue {
    pub expected_value: f64,
    pub instant_regret: f64,
    pub cum_regret: f64,
    pub global_switch_cum: u64,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub algorithm: Algorithm,
    pub budget: u64,
    pub optimal_value: f64,
    pub schedule: Option<StageSchedule>,
    pub stages: Vec<StageRecord>,
    pub trace: EpisodeTrace,
    /// Aligned with `trace.episodes()`.
    pub episode_values: Vec<EpisodeValue>,
    /// Exact value of each deployment in `trace.deployments()`.
    pub deployment_values: Vec<f64>,
    pub total_regret: f64,
    pub switches: SwitchCounters,
    pub final_space: Option<VersionSpace>,
    /// Explore-first and LARFE: the greedy policy for the environment's reward.
    pub learned_policy: Option<DeterministicPolicy>,
    pub kernels: Vec<KernelSnapshot>,
    pub notes: Vec<String>,
}

impl ExperimentReport {
    /// Checks the accounting invariants, returning the first violation.
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.trace.len() as u64;
        if n != self.budget {
            return Err(Error::Invariant(format!("{n} episodes played for a budget of {}", self.budget)));
        }
        self.switches.check(n, self.trace.shape())?;
        let mut prev = 0.0;
        for (k, e) in self.episode_values.iter().enumerate() {
            if e.instant_regret < -REGRET_SLACK {
                return Err(Error::Invariant(format!("negative instantaneous regret {} at episode {k}", e.instant_regret)));
            }
            if e.cum_regret < prev - REGRET_SLACK {
                return Err(Error::Invariant(format!("cumulative regret decreased at episode {k}")));
            }
            prev = e.cum_regret;
        }
        let mut last = (0.0, 0, 0, 0);
        for s in &self.stages {
            let now = (s.cum_regret, s.cum_global_switches, s.cum_local_switches, s.batches);
            if now.0 < last.0 - REGRET_SLACK || now.1 < last.1 || now.2 < last.2 || now.3 < last.3 {
                return Err(Error::Invariant(format!("stage {} cumulative counters decreased", s.stage)));
            }
            if s.space_after > s.space_before || s.space_after == 0 {
                return Err(Error::Invariant(format!("stage {} version space grew or emptied", s.stage)));
            }
            last = now;
        }
        if let Some(schedule) = &self.schedule {
            if schedule.consumed() != self.budget {
                return Err(Error::Invariant("schedule does not consume the budget exactly".into()));
            }
        }
        Ok(())
    }

    /// `K0`
    pub fn stage_count(&self) -> usize {
        self.stages.len()
    }
}

/// Incremental regret and switch accounting shared by the learners.
pub(crate) struct Accounting<'a> {
    env: &'a TabularMdp,
    reward: RewardFunction,
    optimal: f64,
    trace: EpisodeTrace,
    deployment_values: Vec<f64>,
    policy_values: HashMap<u64, f64>,
    episodes: Vec<EpisodeValue>,
    regret: f64,
    tracker: SwitchTracker,
}

impl<'a> Accounting<'a> {
    pub(crate) fn new(env: &'a TabularMdp, trace: EpisodeTrace) -> Result<Self> {
        let reward = env.reward_function();
        let (optimal, _) = optimal_value_and_policy(&reward, env)?;
        Ok(Self {
            env,
            reward,
            optimal,
            trace,
            deployment_values: Vec::new(),
            policy_values: HashMap::new(),
            episodes: Vec::new(),
            regret: 0.0,
            tracker: SwitchTracker::new(),
        })
    }

    pub(crate) fn absorb(&mut self, part: EpisodeTrace) -> Result<()> {
        let start = self.trace.len();
        self.trace.append(part)?;
        let shape = self.trace.shape();
        for d in &self.trace.deployments()[self.deployment_values.len()..] {
            let members = d.members();
            let mut total = 0.0;
            for &i in members {
                total += match self.policy_values.get(&i) {
                    Some(&v) => v,
                    None => {
                        let v = evaluate_unchecked(&shape.decode(i)?, &self.reward, self.env);
                        self.policy_values.insert(i, v);
                        v
                    }
                };
            }
            self.deployment_values.push(total / members.len() as f64);
        }
        for r in &self.trace.episodes()[start..] {
            let value = self.deployment_values[r.deployment as usize];
            let instant = self.optimal - value;
            self.regret += instant;
            self.tracker.observe(&self.trace, r.deployment, r.batch);
            self.episodes.push(EpisodeValue {
                expected_value: value,
                instant_regret: instant,
                cum_regret: self.regret,
                global_switch_cum: self.tracker.counters().global,
            });
        }
        Ok(())
    }

    pub(crate) fn regret(&self) -> f64 {
        self.regret
    }

    pub(crate) fn counters(&self) -> SwitchCounters {
        self.tracker.counters()
    }

    pub(crate) fn episodes(&self) -> u64 {
        self.trace.len() as u64
    }

    pub(crate) fn finish(self, algorithm: Algorithm, budget: u64) -> ExperimentReport {
        ExperimentReport {
            algorithm,
            budget,
            optimal_value: self.optimal,
            schedule: None,
            stages: Vec::new(),
            switches: self.tracker.counters(),
            total_regret: self.regret,
            trace: self.trace,
            episode_values: self.episodes,
            deployment_values: self.deployment_values,
            final_space: None,
            learned_policy: None,
            kernels: Vec::new(),
            notes: Vec::new(),
        }
    }
}

/// Uniform mixture `(1/K) sum_k pi_k` over the policies deployed in `trace`;
/// a mixture deployment spreads its episode weight over its members.
pub fn pac_mixture_output(trace: &EpisodeTrace) -> Result<StochasticPolicy> {
    if trace.is_empty() {
        return Err(Error::Precondition("PAC output needs a non-empty trace".into()));
    }
    let mut per_deployment = vec![0u64; trace.deployments().len()];
    for r in trace.episodes() {
        per_deployment[r.deployment as usize] += 1;
    }
    let k = trace.len() as f64;
    let mut weights: BTreeMap<u64, f64> = BTreeMap::new();
    for (d, &n) in trace.deployments().iter().zip(&per_deployment) {
        if n == 0 {
            continue;
        }
        let members = d.members();
        let w = n as f64 / k / members.len() as f64;
        for &i in members {
            *weights.entry(i).or_insert(0.0) += w;
        }
    }
    let shape = trace.shape();
    let components = weights.into_iter().map(|(i, w)| Ok((w, shape.decode(i)?))).collect::<Result<Vec<_>>>()?;
    StochasticPolicy::new(components)
}
