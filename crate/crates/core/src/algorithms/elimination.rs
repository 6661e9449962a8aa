//! Stage-wise policy elimination by estimated value (APEVE and APEVE+).

use serde::{Deserialize, Serialize};

use super::report::{Accounting, ExperimentReport, KernelSnapshot, StageRecord};
use super::schedule::{ScheduleKind, StageSchedule};
use super::{check_env, Algorithm, AlgorithmOptions};
use crate::error::Result;
use crate::estimation::log_confidence;
use crate::exploration::{crude_exploration, fine_exploration, EpisodeTrace, ExplorationContext};
use crate::mdp::TabularMdp;
use crate::policy_space::{argmax_lowest_index, PolicyShape, VersionSpace};

/// Constants of the elimination radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EliminationConfig {
    pub delta: f64,
    pub c_const: f64,
    /// `log(2 H A K / delta)`
    pub iota: f64,
    pub horizon: usize,
    pub num_states: usize,
    pub num_actions: usize,
}

impl EliminationConfig {
    pub fn new(shape: PolicyShape, budget: u64, delta: f64, c_const: f64) -> Result<Self> {
        let iota = log_confidence(shape.horizon, shape.num_actions, budget, delta)?;
        Ok(Self { delta, c_const, iota, horizon: shape.horizon, num_states: shape.num_states, num_actions: shape.num_actions })
    }

    /// `2C (sqrt(H^5 S^2 A iota / T) + S^3 A^2 H^5 iota / lower)`
    pub fn radius(&self, episodes: u64, lower: u64) -> f64 {
        let (h, s, a) = (self.horizon as f64, self.num_states as f64, self.num_actions as f64);
        let h5 = h.powi(5);
        let first = (h5 * s * s * a * self.iota / episodes as f64).sqrt();
        let second = s.powi(3) * a * a * h5 * self.iota / lower as f64;
        2.0 * self.c_const * (first + second)
    }
}

/// Every stage: crude and fine exploration on the surviving set, then
/// elimination with radius `eps(T_k, T_k)`.
pub fn run_apeve(env: &TabularMdp, budget: u64, opts: &AlgorithmOptions) -> Result<ExperimentReport> {
    run_elimination(env, budget, opts, ScheduleKind::Apeve)
}

/// Crude exploration only in stages 1 and 2; later stages reuse stage 2's
/// infrequent set and intermediate kernel and eliminate with `eps(T_k, T_2)`.
pub fn run_apeve_plus(env: &TabularMdp, budget: u64, opts: &AlgorithmOptions) -> Result<ExperimentReport> {
    run_elimination(env, budget, opts, ScheduleKind::ApevePlus)
}

fn run_elimination(env: &TabularMdp, budget: u64, opts: &AlgorithmOptions, kind: ScheduleKind) -> Result<ExperimentReport> {
    opts.validate()?;
    check_env(env)?;
    let shape = PolicyShape::of(env);
    let mut space = VersionSpace::full(shape)?;
    let unit = (shape.horizon * shape.num_states * shape.num_actions) as u64;
    let schedule = StageSchedule::new(kind, budget, unit)?;
    let config = EliminationConfig::new(shape, budget, opts.delta, opts.c_const)?;
    let reward = env.reward_function();

    let mut acct = Accounting::new(env, EpisodeTrace::new(shape))?;
    let mut stages = Vec::with_capacity(schedule.stage_count());
    let mut kernels = Vec::with_capacity(schedule.stage_count());
    let mut frozen = None;

    for (k, &length) in schedule.stages.iter().enumerate() {
        let stage = k as u32 + 1;
        let ctx = ExplorationContext { env, seed: opts.seed, stage, mixture: opts.mixture, exec: opts.exec };
        let crude = kind == ScheduleKind::Apeve || stage <= 2;
        let before = acct.episodes();
        let (infrequent, intermediate) = match (&frozen, crude) {
            (Some(kept), false) => Clone::clone(kept),
            _ => {
                let out = crude_exploration(&space, length, config.iota, &ctx)?;
                acct.absorb(out.trace)?;
                (out.infrequent, out.intermediate)
            }
        };
        let fine = fine_exploration(&infrequent, &intermediate, length, &space, &ctx)?;
        acct.absorb(fine.trace)?;

        let lower = if crude { length } else { schedule.stages[1] };
        let radius = config.radius(length, lower);
        let values = space.evaluate_members(&reward, &fine.estimate, opts.exec)?;
        let (_, best) = argmax_lowest_index(&values).expect("version space is never empty");
        let cutoff = best - radius;
        let mut scores = values.iter();
        let next = space.eliminate(|i| {
            let &(j, v) = scores.next().expect("one value per member");
            debug_assert_eq!(i, j);
            v <= cutoff
        });

        let counters = acct.counters();
        stages.push(StageRecord {
            stage,
            length,
            episodes: acct.episodes() - before,
            crude,
            space_before: space.len(),
            eliminated: space.len() - next.len(),
            space_after: next.len(),
            radius: Some(radius),
            best_estimated_value: Some(best),
            cum_regret: acct.regret(),
            cum_global_switches: counters.global,
            cum_local_switches: counters.local,
            batches: counters.batches,
        });
        kernels.push(KernelSnapshot {
            stage,
            infrequent: infrequent.clone(),
            intermediate: intermediate.to_file_format(),
            estimate: fine.estimate.to_file_format(),
        });
        if kind == ScheduleKind::ApevePlus && stage == 2 {
            frozen = Some((infrequent, intermediate));
        }
        space = next;
    }

    let algorithm = match kind {
        ScheduleKind::Apeve => Algorithm::Apeve,
        ScheduleKind::ApevePlus => Algorithm::ApevePlus,
    };
    let mut report = acct.finish(algorithm, budget);
    report.schedule = Some(schedule);
    report.stages = stages;
    report.kernels = kernels;
    report.final_space = Some(space);
    report.notes.push(format!("iota = {:.16e}", config.iota));
    report.check_invariants()?;
    Ok(report)
}
