//! Crude and fine exploration: every policy and every block length is fixed
//! before any episode of the block is drawn.
//!
//! Crude exploration walks the layers in order. For layer `h` it plans one
//! policy per `(s, a)` against the current intermediate kernel, runs each for
//! `T0` episodes, and uses only those episodes to grow the infrequent set and
//! re-estimate layer `h`. Fine exploration plans all `HSA` policies against
//! the frozen intermediate kernel and re-estimates every layer from the
//! pooled episodes.

use std::collections::HashMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{
    estimate_transition, infrequent_threshold, update_infrequent, LayerCounts, TransitionEstimate, TupleSet,
};
use crate::mdp::{sample_episode, RewardFunction, TabularMdp, Trajectory};
use crate::parallel::{self, ExecMode};
use crate::policy_space::{best_in_set, DeterministicPolicy, PolicyShape, VersionSpace};
use crate::rng::{StreamKey, StreamPhase, MAX_DRAWS_PER_EPISODE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Crude,
    Fine,
    /// Deploying a learned policy (explore-first hand-off).
    Exploit,
}

impl Phase {
    fn stream(self) -> StreamPhase {
        match self {
            Phase::Crude => StreamPhase::Crude,
            Phase::Fine => StreamPhase::Fine,
            Phase::Exploit => StreamPhase::Exploit,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Crude => "crude",
            Phase::Fine => "fine",
            Phase::Exploit => "exploit",
        })
    }
}

/// Split of `T` episodes over the `HSA` planned policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ExplorationBudget {
    pub total: u64,
    /// `T0 = floor(T / (HSA))`
    pub per_policy: u64,
    pub plans: u64,
    /// Run under the last planned policy.
    pub leftover: u64,
}

impl ExplorationBudget {
    pub fn new(what: &'static str, total: u64, horizon: usize, num_states: usize, num_actions: usize) -> Result<Self> {
        let plans = (horizon * num_states * num_actions) as u64;
        let per_policy = total / plans;
        if per_policy < 1 {
            return Err(Error::BudgetTooSmall { what, needed: plans, got: total });
        }
        Ok(Self { total, per_policy, plans, leftover: total - per_policy * plans })
    }

    pub fn allocated(&self) -> u64 {
        self.per_policy * self.plans
    }
}

/// A policy as deployed: one deterministic policy, or a uniform mixture whose
/// member is drawn afresh each episode. Members are policy indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Deployment {
    Deterministic(u64),
    Mixture(Vec<u64>),
}

impl Deployment {
    pub fn members(&self) -> &[u64] {
        match self {
            Deployment::Deterministic(i) => std::slice::from_ref(i),
            Deployment::Mixture(m) => m,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub stage: u32,
    pub phase: Phase,
    /// Pre-declared block this episode belongs to.
    pub batch: u32,
    /// Index into [`EpisodeTrace::deployments`].
    pub deployment: u32,
    /// Mixture member actually played.
    pub member: Option<u32>,
    pub realized_return: f64,
}

/// Episodes in play order together with the distinct deployed policies.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    shape: PolicyShape,
    deployments: Vec<Deployment>,
    lookup: HashMap<Deployment, u32>,
    episodes: Vec<EpisodeRecord>,
    batches: u32,
}

impl EpisodeTrace {
    pub fn new(shape: PolicyShape) -> Self {
        Self { shape, deployments: Vec::new(), lookup: HashMap::new(), episodes: Vec::new(), batches: 0 }
    }

    pub fn shape(&self) -> PolicyShape {
        self.shape
    }

    pub fn deployments(&self) -> &[Deployment] {
        &self.deployments
    }

    pub fn episodes(&self) -> &[EpisodeRecord] {
        &self.episodes
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    /// Id of `deployment`, registering it on first use. Identical policies
    /// share one id.
    pub fn intern(&mut self, deployment: Deployment) -> u32 {
        if let Some(&id) = self.lookup.get(&deployment) {
            return id;
        }
        let id = self.deployments.len() as u32;
        self.deployments.push(deployment.clone());
        self.lookup.insert(deployment, id);
        id
    }

    /// Fresh batch id.
    pub fn open_batch(&mut self) -> u32 {
        self.batches += 1;
        self.batches - 1
    }

    pub fn push(&mut self, record: EpisodeRecord) -> Result<()> {
        if record.deployment as usize >= self.deployments.len() {
            return Err(Error::invalid(format!("unknown deployment id {}", record.deployment)));
        }
        if record.batch >= self.batches {
            self.batches = record.batch + 1;
        }
        self.episodes.push(record);
        Ok(())
    }

    /// Appends `other` after this trace; its batch ids are shifted past ours.
    pub fn append(&mut self, other: EpisodeTrace) -> Result<()> {
        if other.shape != self.shape {
            return Err(Error::invalid("cannot join traces of different policy shapes"));
        }
        let remap: Vec<u32> = other.deployments.into_iter().map(|d| self.intern(d)).collect();
        let offset = self.batches;
        self.episodes.extend(other.episodes.into_iter().map(|mut r| {
            r.deployment = remap[r.deployment as usize];
            r.batch += offset;
            r
        }));
        self.batches += other.batches;
        Ok(())
    }

    /// Member policies of deployment `id`.
    pub fn policies(&self, id: u32) -> Result<Vec<DeterministicPolicy>> {
        let d = self.deployments.get(id as usize).ok_or_else(|| Error::invalid(format!("unknown deployment id {id}")))?;
        d.members().iter().map(|&i| self.shape.decode(i)).collect()
    }
}

/// What exploration needs besides its algorithmic inputs.
#[derive(Debug, Clone, Copy)]
pub struct ExplorationContext<'a> {
    /// Sampling oracle only: its probabilities are never read.
    pub env: &'a TabularMdp,
    pub seed: u64,
    pub stage: u32,
    pub mixture: bool,
    pub exec: ExecMode,
}

impl<'a> ExplorationContext<'a> {
    pub fn new(env: &'a TabularMdp, seed: u64, stage: u32) -> Self {
        Self { env, seed, stage, mixture: false, exec: ExecMode::Sequential }
    }

    fn check(&self, space: &VersionSpace) -> Result<()> {
        if self.env.absorbing().is_some() {
            return Err(Error::invalid("the environment must not declare an absorbing state"));
        }
        if space.shape() != PolicyShape::of(self.env) {
            return Err(Error::invalid("version space shape does not match the environment"));
        }
        if self.env.horizon() >= MAX_DRAWS_PER_EPISODE {
            return Err(Error::invalid(format!("horizon {} is too long for the per-episode rng window", self.env.horizon())));
        }
        Ok(())
    }

    /// Runs `episodes` episodes of a block; a mixture draws its member first
    /// in each episode. Returns `(member, trajectory)` in episode order.
    pub fn deploy(&self, phase: Phase, block: u32, episodes: u64, members: &[DeterministicPolicy]) -> Vec<(u32, Trajectory)> {
        assert!(!members.is_empty(), "deploy needs at least one policy");
        let key = StreamKey::new(self.seed, self.stage, phase.stream(), block);
        parallel::map_range(self.exec, episodes as usize, |e| {
            let mut rng = key.episode_rng(e as u64);
            let m = if members.len() == 1 {
                0
            } else {
                let u: f64 = rng.random();
                ((u * members.len() as f64) as usize).min(members.len() - 1)
            };
            (m as u32, sample_episode(&members[m], self.env, &mut rng))
        })
    }

    fn record(
        &self,
        trace: &mut EpisodeTrace,
        phase: Phase,
        batch: u32,
        deployment: u32,
        mixture: bool,
        results: &[(u32, Trajectory)],
    ) {
        for (m, traj) in results {
            trace
                .push(EpisodeRecord {
                    stage: self.stage,
                    phase,
                    batch,
                    deployment,
                    member: mixture.then_some(*m),
                    realized_return: traj.total_reward(),
                })
                .expect("deployment was interned");
        }
    }
}

/// `pi_{h,s,a}` and the value it attains under the planning kernel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlannedPolicy {
    pub h: usize,
    pub s: usize,
    pub a: usize,
    pub index: u64,
    pub value: f64,
}

fn plan_layer(space: &VersionSpace, kernel: &TransitionEstimate, h: usize, exec: ExecMode) -> Result<Vec<PlannedPolicy>> {
    let shape = space.shape();
    let (nh, ns, na) = (shape.horizon, shape.num_states, shape.num_actions);
    let mut plans = Vec::with_capacity(ns * na);
    for s in 0..ns {
        for a in 0..na {
            let reward = RewardFunction::indicator_sa(nh, ns, na, h, s, a)?;
            let (policy, value) = best_in_set(space, &reward, kernel, exec)?;
            plans.push(PlannedPolicy { h, s, a, index: shape.encode(&policy)?, value });
        }
    }
    Ok(plans)
}

#[derive(Debug, Clone)]
pub struct CrudeOutput {
    pub infrequent: TupleSet,
    pub intermediate: TransitionEstimate,
    pub plans: Vec<PlannedPolicy>,
    pub trace: EpisodeTrace,
}

/// Layer-by-layer exploration building `F` and `P^int` from `total` episodes.
pub fn crude_exploration(space: &VersionSpace, total: u64, iota: f64, ctx: &ExplorationContext) -> Result<CrudeOutput> {
    ctx.check(space)?;
    let shape = space.shape();
    let (nh, ns, na) = (shape.horizon, shape.num_states, shape.num_actions);
    let budget = ExplorationBudget::new("crude exploration", total, nh, ns, na)?;
    let threshold = infrequent_threshold(nh, iota)?;

    let mut infrequent = TupleSet::new(nh, ns, na);
    let mut intermediate = TabularMdp::uniform_absorbing(ns, na, nh)?.with_initial_state(ctx.env.initial_state())?;
    let mut trace = EpisodeTrace::new(shape);
    let mut plans = Vec::with_capacity(nh * ns * na);

    for h in 0..nh {
        let layer = plan_layer(space, &intermediate, h, ctx.exec)?;
        let batch = trace.open_batch();
        let extra = if h + 1 == nh { budget.leftover } else { 0 };
        let mut counts = LayerCounts::new(h, ns, na);
        if ctx.mixture {
            let members: Vec<u64> = layer.iter().map(|p| p.index).collect();
            let policies = members.iter().map(|&i| shape.decode(i)).collect::<Result<Vec<_>>>()?;
            let id = trace.intern(Deployment::Mixture(members));
            let results = ctx.deploy(Phase::Crude, h as u32, budget.per_policy * (ns * na) as u64 + extra, &policies);
            results.iter().for_each(|(_, t)| counts.record_trajectory(t));
            ctx.record(&mut trace, Phase::Crude, batch, id, true, &results);
        } else {
            for (j, plan) in layer.iter().enumerate() {
                let policy = shape.decode(plan.index)?;
                let id = trace.intern(Deployment::Deterministic(plan.index));
                let n = budget.per_policy + if j + 1 == layer.len() { extra } else { 0 };
                let results = ctx.deploy(Phase::Crude, (h * ns * na + j) as u32, n, std::slice::from_ref(&policy));
                results.iter().for_each(|(_, t)| counts.record_trajectory(t));
                ctx.record(&mut trace, Phase::Crude, batch, id, false, &results);
            }
        }
        update_infrequent(&mut infrequent, &counts, threshold)?;
        intermediate = estimate_transition(&counts, &infrequent, &intermediate)?;
        plans.extend(layer);
    }
    Ok(CrudeOutput { infrequent, intermediate, plans, trace })
}

#[derive(Debug, Clone)]
pub struct FineOutput {
    pub estimate: TransitionEstimate,
    pub plans: Vec<PlannedPolicy>,
    pub trace: EpisodeTrace,
}

/// One batch of `total` episodes planned against the frozen `intermediate`;
/// every layer of the returned kernel is estimated from the pooled data.
pub fn fine_exploration(
    infrequent: &TupleSet,
    intermediate: &TransitionEstimate,
    total: u64,
    space: &VersionSpace,
    ctx: &ExplorationContext,
) -> Result<FineOutput> {
    ctx.check(space)?;
    let shape = space.shape();
    let (nh, ns, na) = (shape.horizon, shape.num_states, shape.num_actions);
    if infrequent.shape() != (nh, ns, na) || PolicyShape::of(intermediate) != shape || intermediate.absorbing() != Some(ns) {
        return Err(Error::invalid("infrequent set or intermediate kernel does not match the environment"));
    }
    let budget = ExplorationBudget::new("fine exploration", total, nh, ns, na)?;

    let mut plans = Vec::with_capacity(nh * ns * na);
    for h in 0..nh {
        plans.extend(plan_layer(space, intermediate, h, ctx.exec)?);
    }
    let policies = plans.iter().map(|p| shape.decode(p.index)).collect::<Result<Vec<_>>>()?;

    let mut trace = EpisodeTrace::new(shape);
    let batch = trace.open_batch();
    let mut counts: Vec<LayerCounts> = (0..nh).map(|h| LayerCounts::new(h, ns, na)).collect();
    let mut tally = |results: &[(u32, Trajectory)]| {
        for (_, t) in results {
            counts.iter_mut().for_each(|c| c.record_trajectory(t));
        }
    };
    if ctx.mixture {
        let id = trace.intern(Deployment::Mixture(plans.iter().map(|p| p.index).collect()));
        let results = ctx.deploy(Phase::Fine, 0, total, &policies);
        tally(&results);
        ctx.record(&mut trace, Phase::Fine, batch, id, true, &results);
    } else {
        for (j, (plan, policy)) in plans.iter().zip(&policies).enumerate() {
            let id = trace.intern(Deployment::Deterministic(plan.index));
            let n = budget.per_policy + if j + 1 == plans.len() { budget.leftover } else { 0 };
            let results = ctx.deploy(Phase::Fine, j as u32, n, std::slice::from_ref(policy));
            tally(&results);
            ctx.record(&mut trace, Phase::Fine, batch, id, false, &results);
        }
    }

    let mut estimate = intermediate.clone();
    for c in &counts {
        estimate = estimate_transition(c, infrequent, &estimate)?;
    }
    Ok(FineOutput { estimate, plans, trace })
}
