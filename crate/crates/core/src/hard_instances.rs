//! Lower-bound MDP family: an `A`-ary tree that routes each deterministic
//! policy to one of `Theta(HSA)` bandit-like arms.
//!
//! State `S - 1` is the absorbing sink; states `0..S-1` are regular. For the
//! first `H0` steps, action `j` in state `i` moves to state `A*i + j` (or to
//! the sink when that index is not a regular state). Afterwards action 0
//! keeps the agent in place for free, any other action pays the arm's reward
//! and drops into the sink, and at the last step every action does so.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;
use crate::policy_space::DeterministicPolicy;

/// Action that keeps a regular state in place after the tree layers.
pub const STAY_ACTION: usize = 0;

/// Reward-bearing `(h, s, a)`, zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Arm {
    pub h: usize,
    pub s: usize,
    pub a: usize,
}

/// Where a deterministic policy ends up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArmOutcome {
    Arm(Arm),
    /// Fell into the sink inside the tree; total reward 0.
    ZeroPath,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardInstanceSpec {
    /// Total states including the sink.
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    /// Unlisted arms pay 0.
    pub arm_rewards: BTreeMap<Arm, f64>,
}

impl HardInstanceSpec {
    pub fn new(num_states: usize, num_actions: usize, horizon: usize, arm_rewards: BTreeMap<Arm, f64>) -> Result<Self> {
        let spec = Self { num_states, num_actions, horizon, arm_rewards };
        spec.validate()?;
        Ok(spec)
    }

    /// All arms pay 0.
    pub fn base(num_states: usize, num_actions: usize, horizon: usize) -> Result<Self> {
        Self::new(num_states, num_actions, horizon, BTreeMap::new())
    }

    /// Arm number `k` (in [`Self::arms`] order) pays 1, every other arm 0.
    pub fn problem_k(num_states: usize, num_actions: usize, horizon: usize, k: usize) -> Result<Self> {
        let base = Self::base(num_states, num_actions, horizon)?;
        let arms = base.arms();
        let arm =
            *arms.get(k).ok_or_else(|| Error::invalid(format!("arm {k} out of range: the instance has {} arms", arms.len())))?;
        Self::new(num_states, num_actions, horizon, BTreeMap::from([(arm, 1.0)]))
    }

    /// Minimal positive `H0` with `S <= A^H0`.
    pub fn tree_depth(&self) -> usize {
        let mut depth = 1;
        let mut reach = self.num_actions as u128;
        while reach < self.num_states as u128 && depth < 128 {
            reach = reach.saturating_mul(self.num_actions as u128);
            depth += 1;
        }
        depth
    }

    pub fn sink(&self) -> usize {
        self.num_states - 1
    }

    fn validate(&self) -> Result<()> {
        let (s, a, h) = (self.num_states, self.num_actions, self.horizon);
        if s < 2 || a < 2 || h < 2 {
            return Err(Error::invalid(format!("hard instance needs S >= 2, A >= 2, H >= 2 (got S={s}, A={a}, H={h})")));
        }
        // S <= A^(H/2)  <=>  S^2 <= A^H
        let a_pow_h = (a as u128).checked_pow(h as u32).unwrap_or(u128::MAX);
        if (s as u128) * (s as u128) > a_pow_h {
            return Err(Error::invalid(format!("hard instance requires S <= A^(H/2) (S={s}, A={a}, H={h})")));
        }
        for (arm, &r) in &self.arm_rewards {
            if !self.is_arm(*arm) {
                return Err(Error::invalid(format!("{arm:?} is not a reward-bearing arm")));
            }
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::invalid(format!("arm reward {r} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn is_arm(&self, arm: Arm) -> bool {
        arm.h >= self.tree_depth()
            && arm.h < self.horizon
            && arm.s < self.sink()
            && arm.a < self.num_actions
            && (arm.a != STAY_ACTION || arm.h == self.horizon - 1)
    }

    /// Every reward-bearing arm, in `(h, s, a)` order.
    pub fn arms(&self) -> Vec<Arm> {
        let mut out = Vec::new();
        for h in self.tree_depth()..self.horizon {
            for s in 0..self.sink() {
                for a in 0..self.num_actions {
                    let arm = Arm { h, s, a };
                    if self.is_arm(arm) {
                        out.push(arm);
                    }
                }
            }
        }
        out
    }

    pub fn arm_reward(&self, arm: Arm) -> f64 {
        self.arm_rewards.get(&arm).copied().unwrap_or(0.0)
    }

    fn tree_child(&self, s: usize, a: usize) -> usize {
        let child = self.num_actions * s + a;
        if child < self.sink() {
            child
        } else {
            self.sink()
        }
    }

    pub fn build(&self) -> Result<TabularMdp> {
        self.validate()?;
        let (ns, na, nh) = (self.num_states, self.num_actions, self.horizon);
        let depth = self.tree_depth();
        let sink = self.sink();
        let mut transition = vec![0.0; nh * ns * na * ns];
        let mut reward = vec![0.0; nh * ns * na];
        for h in 0..nh {
            for s in 0..ns {
                for a in 0..na {
                    let idx = (h * ns + s) * na + a;
                    let next = if s == sink {
                        sink
                    } else if h < depth {
                        self.tree_child(s, a)
                    } else if a == STAY_ACTION && h + 1 < nh {
                        s
                    } else {
                        reward[idx] = self.arm_reward(Arm { h, s, a });
                        sink
                    };
                    transition[idx * ns + next] = 1.0;
                }
            }
        }
        TabularMdp::new(ns, na, nh, transition, reward, 0, None)
    }

    /// Arm reached by following `policy` through the deterministic dynamics.
    pub fn policy_to_arm(&self, policy: &DeterministicPolicy) -> Result<ArmOutcome> {
        if policy.horizon() != self.horizon || policy.num_states() != self.num_states || policy.num_actions() != self.num_actions
        {
            return Err(Error::invalid("policy shape does not match the hard instance"));
        }
        let mut s = 0;
        for h in 0..self.tree_depth() {
            s = self.tree_child(s, policy.action(h, s));
            if s == self.sink() {
                return Ok(ArmOutcome::ZeroPath);
            }
        }
        for h in self.tree_depth()..self.horizon {
            let a = policy.action(h, s);
            if a != STAY_ACTION || h + 1 == self.horizon {
                return Ok(ArmOutcome::Arm(Arm { h, s, a }));
            }
        }
        unreachable!("the last layer always exits through an arm")
    }

    /// `(S-1)(A-1)(H-H0-1) + (S-1)A`
    pub fn arm_count(&self) -> usize {
        let regular = self.num_states - 1;
        regular * (self.num_actions - 1) * (self.horizon - self.tree_depth() - 1) + regular * self.num_actions
    }

    /// Arms manifest rows `(arm, reward)` covering every arm.
    pub fn manifest(&self) -> Vec<ArmEntry> {
        self.arms().into_iter().map(|arm| ArmEntry { h: arm.h, s: arm.s, a: arm.a, reward: self.arm_reward(arm) }).collect()
    }
}

/// One row of the arms manifest (zero-based indices).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmEntry {
    pub h: usize,
    pub s: usize,
    pub a: usize,
    pub reward: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{optimal_value_and_policy, value_of_policy};
    use crate::policy_space::{PolicyShape, VersionSpace};

    #[test]
    fn tree_depth_is_minimal() {
        assert_eq!(HardInstanceSpec { num_states: 5, num_actions: 2, horizon: 6, arm_rewards: BTreeMap::new() }.tree_depth(), 3);
        assert_eq!(HardInstanceSpec::base(4, 2, 4).unwrap().tree_depth(), 2);
        assert_eq!(HardInstanceSpec::base(2, 2, 2).unwrap().tree_depth(), 1);
    }

    #[test]
    fn shape_assumption_is_enforced() {
        assert!(HardInstanceSpec::base(5, 2, 4).is_err());
        assert!(HardInstanceSpec::base(5, 2, 5).is_ok());
        assert!(HardInstanceSpec::base(1, 2, 4).is_err());
        let bad_arm = BTreeMap::from([(Arm { h: 0, s: 0, a: 1 }, 1.0)]);
        assert!(HardInstanceSpec::new(3, 2, 4, bad_arm).is_err());
        let stay_arm = BTreeMap::from([(Arm { h: 2, s: 0, a: 0 }, 1.0)]);
        assert!(HardInstanceSpec::new(3, 2, 4, stay_arm).is_err());
    }

    #[test]
    fn rows_are_one_hot() {
        let mdp = HardInstanceSpec::problem_k(3, 2, 4, 2).unwrap().build().unwrap();
        for h in 0..4 {
            for s in 0..3 {
                for a in 0..2 {
                    let row = mdp.row(h, s, a);
                    assert_eq!(row.iter().filter(|&&p| p == 1.0).count(), 1);
                    assert_eq!(row.iter().filter(|&&p| p == 0.0).count(), 2);
                }
            }
        }
    }

    #[test]
    fn base_problem_is_all_zero() {
        let mdp = HardInstanceSpec::base(3, 2, 4).unwrap().build().unwrap();
        let (v, _) = optimal_value_and_policy(&mdp.reward_function(), &mdp).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn stay_to_the_end_and_overflow() {
        let spec = HardInstanceSpec::base(3, 2, 4).unwrap();
        // a0 then a1 from s0 reaches s1 after the tree; staying lands on (H-1, s1, pi).
        let mut acts = vec![0u32; 12];
        acts[0] = 0; // h0 s0 -> s0
        acts[3] = 1; // h1 s0 -> s1
        acts[10] = 1; // h3 s1 plays 1
        let p = DeterministicPolicy::from_actions(4, 3, 2, acts).unwrap();
        assert_eq!(spec.policy_to_arm(&p).unwrap(), ArmOutcome::Arm(Arm { h: 3, s: 1, a: 1 }));
        // a1 then a1: child index 2*1+1 = 3 >= S-1 so the policy overflows.
        let over = DeterministicPolicy::constant(4, 3, 2, 1).unwrap();
        assert_eq!(spec.policy_to_arm(&over).unwrap(), ArmOutcome::ZeroPath);
    }

    #[test]
    fn enumeration_reaches_every_arm() {
        for (s, a, h) in [(3, 2, 4), (2, 2, 3), (3, 3, 2), (4, 2, 4)] {
            let spec = HardInstanceSpec::base(s, a, h).unwrap();
            let shape = PolicyShape::new(s, a, h);
            let mut seen = std::collections::BTreeSet::new();
            for i in VersionSpace::full(shape).unwrap().iter() {
                if let ArmOutcome::Arm(arm) = spec.policy_to_arm(&shape.decode(i).unwrap()).unwrap() {
                    seen.insert(arm);
                }
            }
            let arms: std::collections::BTreeSet<_> = spec.arms().into_iter().collect();
            assert_eq!(seen, arms);
            assert_eq!(seen.len(), spec.arm_count());
        }
    }

    #[test]
    fn returns_match_dp_and_optimum_is_best_arm() {
        let arms = BTreeMap::from([(Arm { h: 2, s: 0, a: 1 }, 0.5), (Arm { h: 3, s: 1, a: 0 }, 1.0)]);
        let spec = HardInstanceSpec::new(3, 2, 4, arms).unwrap();
        let mdp = spec.build().unwrap();
        let r = mdp.reward_function();
        let shape = PolicyShape::new(3, 2, 4);
        for i in (0..shape.count().unwrap()).step_by(7) {
            let p = shape.decode(i).unwrap();
            let want = match spec.policy_to_arm(&p).unwrap() {
                ArmOutcome::Arm(arm) => spec.arm_reward(arm),
                ArmOutcome::ZeroPath => 0.0,
            };
            assert_eq!(value_of_policy(&p, &r, &mdp).unwrap(), want);
        }
        let (v, _) = optimal_value_and_policy(&r, &mdp).unwrap();
        assert_eq!(v, 1.0);
    }
}
