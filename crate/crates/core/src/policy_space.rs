//! Deterministic policies, their mixed-radix indexing, and explicit version
//! spaces over all `A^(S*H)` of them.

use bitvec::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{self, RewardFunction, TabularMdp};
use crate::parallel::{self, ExecMode};

/// Largest policy count an explicit version space may hold.
pub const MAX_POLICIES: u64 = 1 << 24;

const SCAN_CHUNK: u64 = 4096;

/// Table `pi_h(s) -> a`, stored h-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DeterministicPolicy {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    actions: Vec<u32>,
}

impl DeterministicPolicy {
    pub fn from_actions(horizon: usize, num_states: usize, num_actions: usize, actions: Vec<u32>) -> Result<Self> {
        if actions.len() != horizon * num_states {
            return Err(Error::invalid(format!(
                "policy table has {} entries, expected H*S = {}",
                actions.len(),
                horizon * num_states
            )));
        }
        if let Some(&bad) = actions.iter().find(|&&a| a as usize >= num_actions) {
            return Err(Error::invalid(format!("action {bad} out of range for {num_actions} actions")));
        }
        Ok(Self { horizon, num_states, num_actions, actions })
    }

    /// Policy that always plays `action`.
    pub fn constant(horizon: usize, num_states: usize, num_actions: usize, action: u32) -> Result<Self> {
        Self::from_actions(horizon, num_states, num_actions, vec![action; horizon * num_states])
    }

    #[inline]
    pub fn action(&self, h: usize, s: usize) -> usize {
        self.actions[h * self.num_states + s] as usize
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn actions(&self) -> &[u32] {
        &self.actions
    }

    /// Nested `[h][s]` table, the report serialization.
    pub fn to_table(&self) -> Vec<Vec<u32>> {
        self.actions.chunks(self.num_states).map(<[u32]>::to_vec).collect()
    }

    /// Number of `(h, s)` entries where the two policies disagree.
    pub fn disagreements(&self, other: &Self) -> usize {
        self.actions.iter().zip(&other.actions).filter(|(a, b)| a != b).count()
    }

    pub fn shape(&self) -> PolicyShape {
        PolicyShape { num_states: self.num_states, num_actions: self.num_actions, horizon: self.horizon }
    }
}

/// Finite mixture of deterministic policies. A member is drawn once at the
/// start of an episode, so the value is the weighted mean of member values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticPolicy {
    components: Vec<(f64, DeterministicPolicy)>,
}

impl StochasticPolicy {
    pub fn new(components: Vec<(f64, DeterministicPolicy)>) -> Result<Self> {
        let Some((_, first)) = components.first() else {
            return Err(Error::invalid("a mixture needs at least one member"));
        };
        let shape = first.shape();
        let mut total = 0.0;
        for (w, p) in &components {
            if !w.is_finite() || *w < 0.0 {
                return Err(Error::invalid(format!("mixture weight {w} is not a probability")));
            }
            if p.shape() != shape {
                return Err(Error::invalid("mixture members must share one shape"));
            }
            total += w;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("mixture weights sum to {total}, not 1")));
        }
        Ok(Self { components })
    }

    pub fn uniform(members: Vec<DeterministicPolicy>) -> Result<Self> {
        let w = 1.0 / members.len().max(1) as f64;
        Self::new(members.into_iter().map(|p| (w, p)).collect())
    }

    pub fn components(&self) -> impl Iterator<Item = (f64, &DeterministicPolicy)> {
        self.components.iter().map(|(w, p)| (*w, p))
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

/// `(S, A, H)` of a policy class. Index `sum_p a_p * A^p` with position
/// `p = h*S + s`, so the first-step, first-state entry is the least
/// significant digit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PolicyShape {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
}

impl PolicyShape {
    pub fn new(num_states: usize, num_actions: usize, horizon: usize) -> Self {
        Self { num_states, num_actions, horizon }
    }

    /// Shape of policies over the original states of `mdp`.
    pub fn of(mdp: &TabularMdp) -> Self {
        Self::new(mdp.num_original_states(), mdp.num_actions(), mdp.horizon())
    }

    pub fn entries(&self) -> usize {
        self.num_states * self.horizon
    }

    /// `A^(S*H)`, or an error when it exceeds [`MAX_POLICIES`].
    pub fn count(&self) -> Result<u64> {
        let mut n: u64 = 1;
        for _ in 0..self.entries() {
            n = n.checked_mul(self.num_actions as u64).filter(|&n| n <= MAX_POLICIES).ok_or_else(|| {
                Error::invalid(format!(
                    "A^(S*H) = {}^{} policies exceeds the explicit version-space cap of {MAX_POLICIES}",
                    self.num_actions,
                    self.entries()
                ))
            })?;
        }
        Ok(n)
    }

    pub fn encode(&self, policy: &DeterministicPolicy) -> Result<u64> {
        if policy.shape() != *self {
            return Err(Error::invalid("policy shape does not match the policy class"));
        }
        self.count()?;
        let a = self.num_actions as u64;
        Ok(policy.actions.iter().rev().fold(0u64, |acc, &x| acc * a + x as u64))
    }

    pub fn decode(&self, index: u64) -> Result<DeterministicPolicy> {
        let count = self.count()?;
        if index >= count {
            return Err(Error::invalid(format!("policy index {index} out of range (< {count})")));
        }
        Ok(self.decode_unchecked(index))
    }

    pub(crate) fn decode_unchecked(&self, mut index: u64) -> DeterministicPolicy {
        let a = self.num_actions as u64;
        let actions = (0..self.entries())
            .map(|_| {
                let digit = (index % a) as u32;
                index /= a;
                digit
            })
            .collect();
        DeterministicPolicy { horizon: self.horizon, num_states: self.num_states, num_actions: self.num_actions, actions }
    }
}

/// Explicit set of surviving policy indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VersionSpace {
    shape: PolicyShape,
    members: BitVec<u64, Lsb0>,
    len: u64,
}

impl VersionSpace {
    /// Every deterministic policy of `shape`.
    pub fn full(shape: PolicyShape) -> Result<Self> {
        let n = shape.count()?;
        Ok(Self { shape, members: bitvec![u64, Lsb0; 1; n as usize], len: n })
    }

    pub fn from_indices(shape: PolicyShape, indices: impl IntoIterator<Item = u64>) -> Result<Self> {
        let n = shape.count()?;
        let mut members = bitvec![u64, Lsb0; 0; n as usize];
        for i in indices {
            if i >= n {
                return Err(Error::invalid(format!("policy index {i} out of range (< {n})")));
            }
            members.set(i as usize, true);
        }
        let len = members.count_ones() as u64;
        Ok(Self { shape, members, len })
    }

    pub fn shape(&self) -> PolicyShape {
        self.shape
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_full(&self) -> bool {
        self.len == self.members.len() as u64
    }

    pub fn contains(&self, index: u64) -> bool {
        self.members.get(index as usize).is_some_and(|b| *b)
    }

    /// Member indices in increasing order.
    pub fn iter(&self) -> impl Iterator<Item = u64> + '_ {
        self.members.iter_ones().map(|i| i as u64)
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.shape == other.shape && self.iter().all(|i| other.contains(i))
    }

    /// Copy of the space without the members for which `remove` is true.
    pub fn eliminate(&self, mut remove: impl FnMut(u64) -> bool) -> Self {
        let mut members = self.members.clone();
        for i in self.members.iter_ones() {
            if remove(i as u64) {
                members.set(i, false);
            }
        }
        let len = members.count_ones() as u64;
        Self { shape: self.shape, members, len }
    }

    /// `V^pi(r, P)` for every member, in index order.
    pub fn evaluate_members(&self, reward: &RewardFunction, mdp: &TabularMdp, exec: ExecMode) -> Result<Vec<(u64, f64)>> {
        self.check_mdp(mdp)?;
        mdp::check_reward_shape(reward, mdp)?;
        let total = self.members.len() as u64;
        let chunks = total.div_ceil(SCAN_CHUNK) as usize;
        let parts = parallel::map_range(exec, chunks, |c| {
            let lo = c as u64 * SCAN_CHUNK;
            let hi = (lo + SCAN_CHUNK).min(total);
            (lo..hi)
                .filter(|&i| self.members[i as usize])
                .map(|i| (i, mdp::evaluate_unchecked(&self.shape.decode_unchecked(i), reward, mdp)))
                .collect::<Vec<_>>()
        });
        Ok(parts.into_iter().flatten().collect())
    }

    fn check_mdp(&self, mdp: &TabularMdp) -> Result<()> {
        let shape = PolicyShape::of(mdp);
        if shape != self.shape {
            return Err(Error::invalid(format!("version space shape {:?} does not match MDP shape {shape:?}", self.shape)));
        }
        Ok(())
    }
}

/// Member maximizing `V^pi(r, P)`.
///
/// The full space is solved by backward induction (the unrestricted optimum
/// is always a deterministic policy, with lowest-action tie-breaking); any
/// other space is scanned exhaustively with ties going to the lowest index.
pub fn best_in_set(
    space: &VersionSpace,
    reward: &RewardFunction,
    mdp: &TabularMdp,
    exec: ExecMode,
) -> Result<(DeterministicPolicy, f64)> {
    if space.is_empty() {
        return Err(Error::Precondition("best_in_set called on an empty version space".into()));
    }
    space.check_mdp(mdp)?;
    if space.is_full() {
        let (value, policy) = mdp::optimal_value_and_policy(reward, mdp)?;
        return Ok((policy, value));
    }
    let (index, value) =
        argmax_lowest_index(&space.evaluate_members(reward, mdp, exec)?).expect("non-empty space has a maximizer");
    Ok((space.shape.decode_unchecked(index), value))
}

/// First entry attaining the maximum value.
pub fn argmax_lowest_index(values: &[(u64, f64)]) -> Option<(u64, f64)> {
    values.iter().copied().fold(None, |best, (i, v)| match best {
        Some((_, bv)) if v <= bv => best,
        _ => Some((i, v)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn trivial_shape_has_one_policy() {
        let shape = PolicyShape::new(1, 1, 1);
        assert_eq!(shape.count().unwrap(), 1);
        let p = shape.decode(0).unwrap();
        assert_eq!(shape.encode(&p).unwrap(), 0);
        assert!(shape.decode(1).is_err());
    }

    #[test]
    fn two_by_two_by_two_has_sixteen() {
        let shape = PolicyShape::new(2, 2, 2);
        assert_eq!(shape.count().unwrap(), 16);
        let all: std::collections::HashSet<_> = (0..16).map(|i| shape.decode(i).unwrap()).collect();
        assert_eq!(all.len(), 16);
    }

    #[test]
    fn digit_order_is_h_major() {
        let shape = PolicyShape::new(2, 3, 2);
        // index 1 sets (h=0, s=0); index 3 sets (h=0, s=1); index 9 sets (h=1, s=0)
        assert_eq!(shape.decode(1).unwrap().action(0, 0), 1);
        assert_eq!(shape.decode(3).unwrap().action(0, 1), 1);
        assert_eq!(shape.decode(9).unwrap().action(1, 0), 1);
    }

    #[test]
    fn oversized_shapes_are_rejected() {
        assert!(PolicyShape::new(5, 2, 5).count().is_err());
        assert!(VersionSpace::full(PolicyShape::new(13, 2, 2)).is_err());
        assert_eq!(PolicyShape::new(4, 2, 5).count().unwrap(), 1 << 20);
    }

    #[test]
    fn eliminate_edge_cases() {
        let space = VersionSpace::full(PolicyShape::new(2, 2, 2)).unwrap();
        assert_eq!(space.eliminate(|_| false), space);
        let gone = space.eliminate(|_| true);
        assert!(gone.is_empty());
        assert_eq!(space.len(), 16);
    }

    #[test]
    fn eliminate_below_median_keeps_half() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let values: Vec<f64> = (0..16).map(|_| rng.random()).collect();
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let median = 0.5 * (sorted[7] + sorted[8]);
        let space = VersionSpace::full(PolicyShape::new(2, 2, 2)).unwrap();
        let kept = space.eliminate(|i| values[i as usize] < median);
        let direct = values.iter().filter(|&&v| v >= median).count() as u64;
        assert_eq!(kept.len(), 8);
        assert_eq!(kept.len(), direct);
    }

    #[test]
    fn empty_space_has_no_best() {
        let shape = PolicyShape::new(1, 2, 1);
        let mdp = TabularMdp::new(1, 2, 1, vec![1.0, 1.0], vec![0.1, 0.9], 0, None).unwrap();
        let empty = VersionSpace::from_indices(shape, []).unwrap();
        assert!(matches!(best_in_set(&empty, &mdp.reward_function(), &mdp, ExecMode::Sequential), Err(Error::Precondition(_))));
        let single = VersionSpace::from_indices(shape, [0]).unwrap();
        let (p, v) = best_in_set(&single, &mdp.reward_function(), &mdp, ExecMode::Sequential).unwrap();
        assert_eq!((p.action(0, 0), v), (0, 0.1));
    }

    #[test]
    fn stochastic_weights_are_checked() {
        let p = DeterministicPolicy::constant(1, 1, 2, 0).unwrap();
        assert!(StochasticPolicy::new(vec![(0.5, p.clone())]).is_err());
        assert!(StochasticPolicy::new(vec![]).is_err());
        assert_eq!(StochasticPolicy::uniform(vec![p.clone(), p]).unwrap().len(), 2);
    }

    proptest! {
        #[test]
        fn encode_decode_bijection(s in 1usize..4, a in 1usize..4, h in 1usize..4, seed in any::<u64>()) {
            let shape = PolicyShape::new(s, a, h);
            if let Ok(n) = shape.count() {
                let i = seed % n;
                let p = shape.decode(i).unwrap();
                prop_assert_eq!(shape.encode(&p).unwrap(), i);
            }
        }

        #[test]
        fn eliminate_only_shrinks(mask in any::<u64>(), drop in any::<u64>()) {
            let shape = PolicyShape::new(3, 2, 2);
            let space = VersionSpace::from_indices(shape, (0..64).filter(|i| mask >> i & 1 == 1)).unwrap();
            let after = space.eliminate(|i| drop >> i & 1 == 1);
            prop_assert!(after.is_subset_of(&space));
            prop_assert_eq!(after.len(), (mask & !drop).count_ones() as u64);
        }
    }
}
