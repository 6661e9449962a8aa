//! Switching-cost and batch accounting over an episode trace.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exploration::{Deployment, EpisodeTrace};
use crate::policy_space::PolicyShape;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchCounters {
    /// Episodes `k` with `pi_k != pi_{k+1}`.
    pub global: u64,
    /// Sum over changes of the number of `(h, s)` whose action changed.
    pub local: u64,
    /// Pre-declared deployment blocks.
    pub batches: u64,
}

impl SwitchCounters {
    /// Checks the counter invariants for a trace of `episodes` episodes.
    pub fn check(&self, episodes: u64, shape: PolicyShape) -> Result<()> {
        let cells = shape.entries() as u64;
        let gaps = episodes.saturating_sub(1);
        let fail = |what: String| Err(Error::Invariant(what));
        if episodes == 0 {
            return fail("switch counters on an empty trace".into());
        }
        if self.global > self.local {
            return fail(format!("global switches {} exceed local switches {}", self.global, self.local));
        }
        if self.global > gaps {
            return fail(format!("global switches {} exceed K-1 = {gaps}", self.global));
        }
        if self.local > cells * gaps {
            return fail(format!("local switches {} exceed HS(K-1) = {}", self.local, cells * gaps));
        }
        if self.batches == 0 || self.batches > episodes {
            return fail(format!("batch count {} outside [1, {episodes}]", self.batches));
        }
        Ok(())
    }
}

/// Streaming counter: feed `(deployment, batch)` per episode in play order.
#[derive(Debug, Clone, Default)]
pub struct SwitchTracker {
    counters: SwitchCounters,
    last: Option<(u32, u32)>,
    distance_cache: HashMap<(u32, u32), u64>,
}

impl SwitchTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn counters(&self) -> SwitchCounters {
        self.counters
    }

    /// Records the next episode of `trace` (which must know `deployment`).
    pub fn observe(&mut self, trace: &EpisodeTrace, deployment: u32, batch: u32) {
        match self.last {
            None => self.counters.batches = 1,
            Some((prev, prev_batch)) => {
                if prev_batch != batch {
                    self.counters.batches += 1;
                }
                if prev != deployment {
                    self.counters.global += 1;
                    let shape = trace.shape();
                    let d = *self
                        .distance_cache
                        .entry((prev, deployment))
                        .or_insert_with(|| local_distance(trace.deployments(), shape, prev, deployment));
                    self.counters.local += d;
                }
            }
        }
        self.last = Some((deployment, batch));
    }
}

/// Number of `(h, s)` entries that differ. A change to or from a mixture
/// counts every entry.
fn local_distance(deployments: &[Deployment], shape: PolicyShape, a: u32, b: u32) -> u64 {
    match (&deployments[a as usize], &deployments[b as usize]) {
        (Deployment::Deterministic(x), Deployment::Deterministic(y)) => {
            let (p, q) = (shape.decode(*x), shape.decode(*y));
            match (p, q) {
                (Ok(p), Ok(q)) => p.disagreements(&q) as u64,
                _ => shape.entries() as u64,
            }
        }
        _ => shape.entries() as u64,
    }
}

/// Global, local and batch counts of a whole trace.
pub fn count_switches(trace: &EpisodeTrace) -> Result<SwitchCounters> {
    if trace.is_empty() {
        return Err(Error::Precondition("count_switches needs at least one episode".into()));
    }
    let mut tracker = SwitchTracker::new();
    for r in trace.episodes() {
        tracker.observe(trace, r.deployment, r.batch);
    }
    Ok(tracker.counters())
}
