//! Reward-free exploration over the full policy class and the explore-first
//! learner built on it.

use super::report::{Accounting, ExperimentReport, KernelSnapshot, StageRecord};
use super::{check_env, Algorithm, AlgorithmOptions};
use crate::error::{Error, Result};
use crate::estimation::{log_confidence, TransitionEstimate, TupleSet};
use crate::exploration::{
    crude_exploration, fine_exploration, Deployment, EpisodeRecord, EpisodeTrace, ExplorationContext, Phase,
};
use crate::mdp::{optimal_value_and_policy, RewardFunction, TabularMdp};
use crate::policy_space::{DeterministicPolicy, PolicyShape, VersionSpace};

/// Splits an exploration budget into `(N0, N)` for the crude and fine calls.
///
/// Equal halves, as in the elimination learners' stages.
pub fn larfe_split(total: u64) -> (u64, u64) {
    let n0 = total / 2;
    (n0, total - n0)
}

#[derive(Debug, Clone)]
pub struct LarfeOutput {
    pub infrequent: TupleSet,
    pub intermediate: TransitionEstimate,
    pub estimate: TransitionEstimate,
    pub iota: f64,
    pub crude_episodes: u64,
    pub fine_episodes: u64,
    pub trace: EpisodeTrace,
}

impl LarfeOutput {
    /// Greedy policy for `reward` on the estimated kernel, with its
    /// estimated value. Uses no further interaction.
    pub fn plan(&self, reward: &RewardFunction) -> Result<(DeterministicPolicy, f64)> {
        let (value, policy) = optimal_value_and_policy(reward, &self.estimate)?;
        Ok((policy, value))
    }
}

/// Crude exploration with `n0` episodes followed by fine exploration with
/// `n` episodes, both over every deterministic policy.
pub fn run_larfe(env: &TabularMdp, n0: u64, n: u64, opts: &AlgorithmOptions) -> Result<LarfeOutput> {
    opts.validate()?;
    check_env(env)?;
    let shape = PolicyShape::of(env);
    let space = VersionSpace::full(shape)?;
    let iota = log_confidence(shape.horizon, shape.num_actions, n0 + n, opts.delta)?;
    let ctx = ExplorationContext { env, seed: opts.seed, stage: 1, mixture: opts.mixture, exec: opts.exec };
    let crude = crude_exploration(&space, n0, iota, &ctx)?;
    let fine = fine_exploration(&crude.infrequent, &crude.intermediate, n, &space, &ctx)?;
    let mut trace = crude.trace;
    trace.append(fine.trace)?;
    Ok(LarfeOutput {
        infrequent: crude.infrequent,
        intermediate: crude.intermediate,
        estimate: fine.estimate,
        iota,
        crude_episodes: n0,
        fine_episodes: n,
        trace,
    })
}

fn larfe_report(
    env: &TabularMdp,
    out: LarfeOutput,
    algorithm: Algorithm,
    budget: u64,
) -> Result<(ExperimentReport, DeterministicPolicy)> {
    let shape = PolicyShape::of(env);
    let mut acct = Accounting::new(env, EpisodeTrace::new(shape))?;
    acct.absorb(out.trace.clone())?;
    let (policy, estimated) = out.plan(&env.reward_function())?;
    let counters = acct.counters();
    let record = StageRecord {
        stage: 1,
        length: out.crude_episodes + out.fine_episodes,
        episodes: acct.episodes(),
        crude: true,
        space_before: shape.count()?,
        eliminated: 0,
        space_after: shape.count()?,
        radius: None,
        best_estimated_value: Some(estimated),
        cum_regret: acct.regret(),
        cum_global_switches: counters.global,
        cum_local_switches: counters.local,
        batches: counters.batches,
    };
    let mut report = acct.finish(algorithm, budget);
    report.stages.push(record);
    report.kernels.push(KernelSnapshot {
        stage: 1,
        infrequent: out.infrequent.clone(),
        intermediate: out.intermediate.to_file_format(),
        estimate: out.estimate.to_file_format(),
    });
    report.notes.push(format!("larfe split N0 = {}, N = {} (equal halves)", out.crude_episodes, out.fine_episodes));
    report.notes.push(format!("iota = {:.16e}", out.iota));
    Ok((report, policy))
}

/// LARFE with its whole budget split by [`larfe_split`]; the report's
/// learned policy is the greedy policy for the environment's own reward.
pub fn run_larfe_experiment(env: &TabularMdp, budget: u64, opts: &AlgorithmOptions) -> Result<ExperimentReport> {
    let (n0, n) = larfe_split(budget);
    let out = run_larfe(env, n0, n, opts)?;
    let (mut report, policy) = larfe_report(env, out, Algorithm::Larfe, budget)?;
    report.learned_policy = Some(policy);
    report.check_invariants()?;
    Ok(report)
}

/// `round(K^(2/3) H S^(2/3) A^(1/3))`, required to lie in `[1, K)`.
pub fn explore_first_budget(budget: u64, shape: PolicyShape) -> Result<u64> {
    let (h, s, a) = (shape.horizon as f64, shape.num_states as f64, shape.num_actions as f64);
    let k = budget as f64;
    let k0 = (k.powf(2.0 / 3.0) * h * s.powf(2.0 / 3.0) * a.cbrt()).round();
    if k0 < 1.0 || k0 >= k {
        return Err(Error::BudgetTooSmall { what: "explore-first exploration share", needed: k0 as u64 + 1, got: budget });
    }
    Ok(k0 as u64)
}

/// LARFE for `K0` episodes, then the greedy policy for the remaining ones.
pub fn explore_first(env: &TabularMdp, budget: u64, opts: &AlgorithmOptions) -> Result<ExperimentReport> {
    opts.validate()?;
    check_env(env)?;
    let shape = PolicyShape::of(env);
    let explore = explore_first_budget(budget, shape)?;
    let (n0, n) = larfe_split(explore);
    let out = run_larfe(env, n0, n, opts)?;
    let (policy, _) = out.plan(&env.reward_function())?;

    let mut acct = Accounting::new(env, EpisodeTrace::new(shape))?;
    acct.absorb(out.trace.clone())?;
    let explored = acct.counters();
    let explored_regret = acct.regret();

    let ctx = ExplorationContext { env, seed: opts.seed, stage: 2, mixture: false, exec: opts.exec };
    let mut exploit = EpisodeTrace::new(shape);
    let batch = exploit.open_batch();
    let id = exploit.intern(Deployment::Deterministic(shape.encode(&policy)?));
    for (_, traj) in ctx.deploy(Phase::Exploit, 0, budget - explore, std::slice::from_ref(&policy)) {
        exploit.push(EpisodeRecord {
            stage: 2,
            phase: Phase::Exploit,
            batch,
            deployment: id,
            member: None,
            realized_return: traj.total_reward(),
        })?;
    }
    acct.absorb(exploit)?;
    let counters = acct.counters();
    let size = shape.count()?;
    let stages = vec![
        StageRecord {
            stage: 1,
            length: explore,
            episodes: explore,
            crude: true,
            space_before: size,
            eliminated: 0,
            space_after: size,
            radius: None,
            best_estimated_value: None,
            cum_regret: explored_regret,
            cum_global_switches: explored.global,
            cum_local_switches: explored.local,
            batches: explored.batches,
        },
        StageRecord {
            stage: 2,
            length: budget - explore,
            episodes: budget - explore,
            crude: false,
            space_before: size,
            eliminated: 0,
            space_after: size,
            radius: None,
            best_estimated_value: None,
            cum_regret: acct.regret(),
            cum_global_switches: counters.global,
            cum_local_switches: counters.local,
            batches: counters.batches,
        },
    ];
    let mut report = acct.finish(Algorithm::ExploreFirst, budget);
    report.stages = stages;
    report.kernels.push(KernelSnapshot {
        stage: 1,
        infrequent: out.infrequent.clone(),
        intermediate: out.intermediate.to_file_format(),
        estimate: out.estimate.to_file_format(),
    });
    report.learned_policy = Some(policy);
    report.notes.push(format!("explore-first K0 = {explore}; larfe split N0 = {n0}, N = {n} (equal halves)"));
    report.notes.push(format!("iota = {:.16e}", out.iota));
    report.check_invariants()?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn explore_first_share() {
        assert_eq!(explore_first_budget(1000, PolicyShape::new(2, 2, 2)).unwrap(), 400);
        assert_eq!(explore_first_budget(100, PolicyShape::new(2, 2, 2)).unwrap(), 86);
        assert!(explore_first_budget(50, PolicyShape::new(2, 2, 2)).is_err());
    }

    #[test]
    fn split_sums_to_total() {
        for t in [0, 1, 7, 100, 2_000_001] {
            let (a, b) = larfe_split(t);
            assert_eq!(a + b, t);
            assert!(a <= b);
        }
    }
}
