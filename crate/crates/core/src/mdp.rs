//! Finite-horizon tabular MDPs with non-stationary transitions.
//!
//! Everything here is exact: values come from backward induction over dense
//! tensors, and sampling only ever reads a caller-owned random stream.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::TupleSet;
use crate::policy_space::{DeterministicPolicy, StochasticPolicy};

/// Rows that miss 1 by more than this are rejected; smaller slack is
/// renormalized away.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Episodic MDP `(S, A, P, r, H, s1)`, optionally carrying an absorbing state.
///
/// Transitions are stored row-major as `[h][s][a][s']`, rewards as `[h][s][a]`.
/// Layers are zero-based in code: `h = 0` is the first step of an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    transition: Vec<f64>,
    reward: Vec<f64>,
    initial_state: usize,
    absorbing: Option<usize>,
}

impl TabularMdp {
    /// Validates every invariant and renormalizes rows within
    /// [`ROW_SUM_TOLERANCE`] of summing to one.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        mut transition: Vec<f64>,
        reward: Vec<f64>,
        initial_state: usize,
        absorbing: Option<usize>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 || horizon == 0 {
            return Err(Error::invalid(format!(
                "states, actions and horizon must be >= 1 (got S={num_states}, A={num_actions}, H={horizon})"
            )));
        }
        let rows = horizon * num_states * num_actions;
        if transition.len() != rows * num_states {
            return Err(Error::invalid(format!(
                "transition tensor has {} entries, expected {}",
                transition.len(),
                rows * num_states
            )));
        }
        if reward.len() != rows {
            return Err(Error::invalid(format!("reward tensor has {} entries, expected {rows}", reward.len())));
        }
        if initial_state >= num_states {
            return Err(Error::invalid(format!("initial state {initial_state} out of range for {num_states} states")));
        }
        if let Some(dagger) = absorbing {
            if dagger >= num_states {
                return Err(Error::invalid(format!("absorbing state {dagger} out of range")));
            }
            if dagger == initial_state {
                return Err(Error::invalid("the initial state cannot be the absorbing state"));
            }
        }
        for (i, row) in transition.chunks_mut(num_states).enumerate() {
            let mut sum = 0.0;
            for &p in row.iter() {
                if !p.is_finite() || p < 0.0 {
                    return Err(Error::invalid(format!("transition row {i} has invalid entry {p}")));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::invalid(format!("transition row {i} sums to {sum}, not 1")));
            }
            if sum != 1.0 {
                row.iter_mut().for_each(|p| *p /= sum);
            }
        }
        for (i, &r) in reward.iter().enumerate() {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::invalid(format!("reward entry {i} = {r} outside [0, 1]")));
            }
        }
        let mdp = Self { num_states, num_actions, horizon, transition, reward, initial_state, absorbing };
        if let Some(dagger) = absorbing {
            for h in 0..horizon {
                for a in 0..num_actions {
                    if mdp.prob(h, dagger, a, dagger) != 1.0 {
                        return Err(Error::invalid(format!("absorbing state must self-loop with probability 1 (h={h}, a={a})")));
                    }
                    if mdp.reward(h, dagger, a) != 0.0 {
                        return Err(Error::invalid("absorbing state must carry zero reward"));
                    }
                }
            }
        }
        Ok(mdp)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    /// States other than the absorbing one.
    pub fn num_original_states(&self) -> usize {
        self.num_states - usize::from(self.absorbing.is_some())
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn absorbing(&self) -> Option<usize> {
        self.absorbing
    }

    #[inline]
    fn row_index(&self, h: usize, s: usize, a: usize) -> usize {
        (h * self.num_states + s) * self.num_actions + a
    }

    /// `P_h(. | s, a)`.
    #[inline]
    pub fn row(&self, h: usize, s: usize, a: usize) -> &[f64] {
        let start = self.row_index(h, s, a) * self.num_states;
        &self.transition[start..start + self.num_states]
    }

    #[inline]
    pub fn prob(&self, h: usize, s: usize, a: usize, next: usize) -> f64 {
        self.row(h, s, a)[next]
    }

    #[inline]
    pub fn reward(&self, h: usize, s: usize, a: usize) -> f64 {
        self.reward[self.row_index(h, s, a)]
    }

    pub fn transition_tensor(&self) -> &[f64] {
        &self.transition
    }

    pub fn reward_tensor(&self) -> &[f64] {
        &self.reward
    }

    /// The MDP's own reward as a [`RewardFunction`] over its original states.
    pub fn reward_function(&self) -> RewardFunction {
        let s = self.num_original_states();
        let mut values = Vec::with_capacity(self.horizon * s * self.num_actions);
        for h in 0..self.horizon {
            for st in 0..s {
                for a in 0..self.num_actions {
                    values.push(self.reward(h, st, a));
                }
            }
        }
        RewardFunction { horizon: self.horizon, num_states: s, num_actions: self.num_actions, values }
    }

    /// Same dynamics with a different reward. The absorbing state, if any,
    /// keeps reward 0.
    pub fn with_reward(&self, reward: &RewardFunction) -> Result<Self> {
        check_reward_shape(reward, self)?;
        let mut out = self.clone();
        for h in 0..self.horizon {
            for s in 0..self.num_states {
                for a in 0..self.num_actions {
                    let idx = out.row_index(h, s, a);
                    out.reward[idx] = reward_at(reward, self, h, s, a);
                }
            }
        }
        Ok(out)
    }

    /// Same kernel and reward started from `state`.
    pub fn with_initial_state(&self, state: usize) -> Result<Self> {
        if state >= self.num_states || Some(state) == self.absorbing {
            return Err(Error::invalid(format!("initial state {state} is out of range or absorbing")));
        }
        let mut out = self.clone();
        out.initial_state = state;
        Ok(out)
    }

    fn layer_rows_mut(&mut self, h: usize) -> &mut [f64] {
        let width = self.num_states * self.num_actions * self.num_states;
        &mut self.transition[h * width..(h + 1) * width]
    }

    /// Overwrites layer `h` with rows produced by `row_fn(s, a, out_row)`.
    /// Used by the estimators, which guarantee row-stochastic output.
    pub(crate) fn replace_layer(&mut self, h: usize, mut row_fn: impl FnMut(usize, usize, &mut [f64])) {
        let (ns, na) = (self.num_states, self.num_actions);
        let layer = self.layer_rows_mut(h);
        for s in 0..ns {
            for a in 0..na {
                let start = (s * na + a) * ns;
                row_fn(s, a, &mut layer[start..start + ns]);
            }
        }
    }

    /// Absorbing-extended kernel over `S + 1` states whose original rows are
    /// uniform over the original states. Rewards are zero.
    pub fn uniform_absorbing(num_original: usize, num_actions: usize, horizon: usize) -> Result<Self> {
        let ns = num_original + 1;
        let dagger = num_original;
        let mut transition = vec![0.0; horizon * ns * num_actions * ns];
        for h in 0..horizon {
            for s in 0..ns {
                for a in 0..num_actions {
                    let start = ((h * ns + s) * num_actions + a) * ns;
                    let row = &mut transition[start..start + ns];
                    if s == dagger {
                        row[dagger] = 1.0;
                    } else {
                        row[..num_original].fill(1.0 / num_original as f64);
                    }
                }
            }
        }
        let reward = vec![0.0; horizon * ns * num_actions];
        Self::new(ns, num_actions, horizon, transition, reward, 0, Some(dagger))
    }

    pub fn to_file_format(&self) -> MdpFile {
        let mut transition = Vec::with_capacity(self.horizon);
        let mut reward = Vec::with_capacity(self.horizon);
        for h in 0..self.horizon {
            let mut tl = Vec::with_capacity(self.num_states);
            let mut rl = Vec::with_capacity(self.num_states);
            for s in 0..self.num_states {
                tl.push((0..self.num_actions).map(|a| self.row(h, s, a).to_vec()).collect());
                rl.push((0..self.num_actions).map(|a| self.reward(h, s, a)).collect());
            }
            transition.push(tl);
            reward.push(rl);
        }
        MdpFile {
            states: self.num_states,
            actions: self.num_actions,
            horizon: self.horizon,
            initial_state: self.initial_state,
            transition,
            reward,
            absorbing: self.absorbing,
        }
    }

    pub fn from_file_format(file: MdpFile) -> Result<Self> {
        let (ns, na, nh) = (file.states, file.actions, file.horizon);
        let shape_err = |what: &str| Error::invalid(format!("{what} has the wrong shape for S={ns}, A={na}, H={nh}"));
        if file.transition.len() != nh || file.reward.len() != nh {
            return Err(shape_err("transition/reward"));
        }
        let mut transition = Vec::with_capacity(nh * ns * na * ns);
        let mut reward = Vec::with_capacity(nh * ns * na);
        for (tl, rl) in file.transition.iter().zip(&file.reward) {
            if tl.len() != ns || rl.len() != ns {
                return Err(shape_err("layer"));
            }
            for (ts, rs) in tl.iter().zip(rl) {
                if ts.len() != na || rs.len() != na {
                    return Err(shape_err("state block"));
                }
                for row in ts {
                    if row.len() != ns {
                        return Err(shape_err("transition row"));
                    }
                    transition.extend_from_slice(row);
                }
                reward.extend_from_slice(rs);
            }
        }
        Self::new(ns, na, nh, transition, reward, file.initial_state, file.absorbing)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: MdpFile =
            serde_json::from_str(text).map_err(|source| Error::Json { context: "parsing MDP document".into(), source })?;
        Self::from_file_format(file)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_file_format()).expect("MDP serialization cannot fail")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::Json { source, .. } => Error::Json { context: path.display().to_string(), source },
            Error::InvalidArgument(msg) => Error::InvalidArgument(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }
}

/// On-disk MDP document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpFile {
    pub states: usize,
    pub actions: usize,
    pub horizon: usize,
    pub initial_state: usize,
    /// `[h][s][a][s']`
    pub transition: Vec<Vec<Vec<Vec<f64>>>>,
    /// `[h][s][a]`
    pub reward: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub absorbing: Option<usize>,
}

/// Reward tensor `r'_h(s, a)` in `[0, 1]` over a set of states.
///
/// When applied to an MDP that has one more (absorbing) state than the
/// reward covers, the absorbing state earns 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardFunction {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl RewardFunction {
    pub fn new(horizon: usize, num_states: usize, num_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != horizon * num_states * num_actions {
            return Err(Error::invalid(format!(
                "reward has {} entries, expected {}",
                values.len(),
                horizon * num_states * num_actions
            )));
        }
        if let Some(bad) = values.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::invalid(format!("reward entry {bad} outside [0, 1]")));
        }
        Ok(Self { horizon, num_states, num_actions, values })
    }

    pub fn zeros(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        Self { horizon, num_states, num_actions, values: vec![0.0; horizon * num_states * num_actions] }
    }

    /// `1_{h,s,a}`
    pub fn indicator_sa(horizon: usize, num_states: usize, num_actions: usize, h: usize, s: usize, a: usize) -> Result<Self> {
        if h >= horizon || s >= num_states || a >= num_actions {
            return Err(Error::invalid(format!("indicator target ({h},{s},{a}) out of range")));
        }
        let mut r = Self::zeros(horizon, num_states, num_actions);
        let idx = r.index(h, s, a);
        r.values[idx] = 1.0;
        Ok(r)
    }

    /// `1_{h,s}`: reward 1 for every action taken in state `s` at step `h`.
    pub fn indicator_s(horizon: usize, num_states: usize, num_actions: usize, h: usize, s: usize) -> Result<Self> {
        if h >= horizon || s >= num_states {
            return Err(Error::invalid(format!("indicator target ({h},{s}) out of range")));
        }
        let mut r = Self::zeros(horizon, num_states, num_actions);
        for a in 0..num_actions {
            let idx = r.index(h, s, a);
            r.values[idx] = 1.0;
        }
        Ok(r)
    }

    /// Entries drawn i.i.d. uniform on `[0, 1)`.
    pub fn random_uniform<R: Rng + ?Sized>(horizon: usize, num_states: usize, num_actions: usize, rng: &mut R) -> Self {
        let values = (0..horizon * num_states * num_actions).map(|_| rng.random::<f64>()).collect();
        Self { horizon, num_states, num_actions, values }
    }

    #[inline]
    fn index(&self, h: usize, s: usize, a: usize) -> usize {
        (h * self.num_states + s) * self.num_actions + a
    }

    #[inline]
    pub fn get(&self, h: usize, s: usize, a: usize) -> f64 {
        self.values[self.index(h, s, a)]
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

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// One step of an episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
}

/// `(s_1, a_1, r_1, ..., s_H, a_H, r_H, s_{H+1})`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub terminal_state: usize,
}

impl Trajectory {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    /// State reached after step `h` (zero-based), i.e. `s_{h+2}` in one-based notation.
    pub fn next_state(&self, h: usize) -> usize {
        self.steps.get(h + 1).map_or(self.terminal_state, |s| s.state)
    }
}

/// Borrowed policy of either kind.
#[derive(Debug, Clone, Copy)]
pub enum PolicyRef<'a> {
    Deterministic(&'a DeterministicPolicy),
    Stochastic(&'a StochasticPolicy),
}

impl<'a> From<&'a DeterministicPolicy> for PolicyRef<'a> {
    fn from(p: &'a DeterministicPolicy) -> Self {
        PolicyRef::Deterministic(p)
    }
}

impl<'a> From<&'a StochasticPolicy> for PolicyRef<'a> {
    fn from(p: &'a StochasticPolicy) -> Self {
        PolicyRef::Stochastic(p)
    }
}

pub(crate) fn check_reward_shape(reward: &RewardFunction, mdp: &TabularMdp) -> Result<()> {
    let states_ok = reward.num_states == mdp.num_states || reward.num_states == mdp.num_original_states();
    if reward.horizon != mdp.horizon || reward.num_actions != mdp.num_actions || !states_ok {
        return Err(Error::invalid(format!(
            "reward shape (H={}, S={}, A={}) does not match MDP (H={}, S={}, A={})",
            reward.horizon, reward.num_states, reward.num_actions, mdp.horizon, mdp.num_states, mdp.num_actions
        )));
    }
    Ok(())
}

pub(crate) fn check_policy_shape(policy: &DeterministicPolicy, mdp: &TabularMdp) -> Result<()> {
    let states_ok = policy.num_states() == mdp.num_states || policy.num_states() == mdp.num_original_states();
    if policy.horizon() != mdp.horizon || !states_ok {
        return Err(Error::invalid(format!(
            "policy shape (H={}, S={}) does not match MDP (H={}, S={})",
            policy.horizon(),
            policy.num_states(),
            mdp.horizon,
            mdp.num_states
        )));
    }
    if policy.actions().iter().any(|&a| a as usize >= mdp.num_actions) {
        return Err(Error::invalid("policy uses an action index outside the MDP's action set"));
    }
    Ok(())
}

#[inline]
fn reward_at(reward: &RewardFunction, mdp: &TabularMdp, h: usize, s: usize, a: usize) -> f64 {
    if s < reward.num_states && Some(s) != mdp.absorbing {
        reward.get(h, s, a)
    } else {
        0.0
    }
}

/// Action a policy takes; states it does not cover (the absorbing state) use action 0.
#[inline]
fn action_at(policy: &DeterministicPolicy, h: usize, s: usize) -> usize {
    if s < policy.num_states() {
        policy.action(h, s)
    } else {
        0
    }
}

/// Backward induction for a deterministic policy, without shape checks.
pub(crate) fn evaluate_unchecked(policy: &DeterministicPolicy, reward: &RewardFunction, mdp: &TabularMdp) -> f64 {
    let ns = mdp.num_states;
    let mut next = vec![0.0; ns];
    let mut cur = vec![0.0; ns];
    for h in (0..mdp.horizon).rev() {
        for (s, slot) in cur.iter_mut().enumerate() {
            let a = action_at(policy, h, s);
            let row = mdp.row(h, s, a);
            let future: f64 = row.iter().zip(&next).map(|(p, v)| p * v).sum();
            *slot = reward_at(reward, mdp, h, s, a) + future;
        }
        std::mem::swap(&mut cur, &mut next);
    }
    next[mdp.initial_state]
}

/// `V^pi(r, P)` at the initial state, by exact backward induction.
pub fn value_of_policy<'a>(policy: impl Into<PolicyRef<'a>>, reward: &RewardFunction, mdp: &TabularMdp) -> Result<f64> {
    check_reward_shape(reward, mdp)?;
    match policy.into() {
        PolicyRef::Deterministic(p) => {
            check_policy_shape(p, mdp)?;
            Ok(evaluate_unchecked(p, reward, mdp))
        }
        PolicyRef::Stochastic(mix) => {
            let mut total = 0.0;
            for (w, p) in mix.components() {
                check_policy_shape(p, mdp)?;
                total += w * evaluate_unchecked(p, reward, mdp);
            }
            Ok(total)
        }
    }
}

/// Target of a visitation query: `(h, s, a)` or `(h, s)` when `action` is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VisitTarget {
    pub h: usize,
    pub s: usize,
    pub action: Option<usize>,
}

impl VisitTarget {
    pub fn state_action(h: usize, s: usize, a: usize) -> Self {
        Self { h, s, action: Some(a) }
    }

    pub fn state(h: usize, s: usize) -> Self {
        Self { h, s, action: None }
    }
}

/// Probability that `policy` visits `target`, i.e. its value under the
/// matching indicator reward.
pub fn visitation_prob<'a>(policy: impl Into<PolicyRef<'a>>, target: VisitTarget, mdp: &TabularMdp) -> Result<f64> {
    let (nh, ns, na) = (mdp.horizon, mdp.num_original_states(), mdp.num_actions);
    let reward = match target.action {
        Some(a) => RewardFunction::indicator_sa(nh, ns, na, target.h, target.s, a)?,
        None => RewardFunction::indicator_s(nh, ns, na, target.h, target.s)?,
    };
    value_of_policy(policy, &reward, mdp)
}

/// Forward state distribution `d_h(s)` of a deterministic policy, `[h][s]`
/// for `h` in `0..=H` (the last layer is the terminal state).
pub fn state_occupancy(policy: &DeterministicPolicy, mdp: &TabularMdp) -> Result<Vec<Vec<f64>>> {
    check_policy_shape(policy, mdp)?;
    let ns = mdp.num_states;
    let mut layers = Vec::with_capacity(mdp.horizon + 1);
    let mut d = vec![0.0; ns];
    d[mdp.initial_state] = 1.0;
    for h in 0..mdp.horizon {
        let mut next = vec![0.0; ns];
        for (s, &mass) in d.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let row = mdp.row(h, s, action_at(policy, h, s));
            for (n, p) in next.iter_mut().zip(row) {
                *n += mass * p;
            }
        }
        layers.push(std::mem::replace(&mut d, next));
    }
    layers.push(d);
    Ok(layers)
}

/// `V*_1(s_1)` and a maximizing deterministic policy over the original
/// states. Ties go to the lowest action index.
pub fn optimal_value_and_policy(reward: &RewardFunction, mdp: &TabularMdp) -> Result<(f64, DeterministicPolicy)> {
    check_reward_shape(reward, mdp)?;
    let (ns, na, nh) = (mdp.num_states, mdp.num_actions, mdp.horizon);
    let covered = mdp.num_original_states();
    let mut actions = vec![0u32; nh * covered];
    let mut next = vec![0.0; ns];
    let mut cur = vec![0.0; ns];
    for h in (0..nh).rev() {
        for s in 0..ns {
            let mut best = f64::NEG_INFINITY;
            let mut best_a = 0;
            for a in 0..na {
                let future: f64 = mdp.row(h, s, a).iter().zip(&next).map(|(p, v)| p * v).sum();
                let q = reward_at(reward, mdp, h, s, a) + future;
                if q > best {
                    best = q;
                    best_a = a;
                }
            }
            cur[s] = best;
            if s < covered {
                actions[h * covered + s] = best_a as u32;
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    let policy = DeterministicPolicy::from_actions(nh, covered, na, actions)?;
    Ok((next[mdp.initial_state], policy))
}

/// Index drawn from a probability row given `u` uniform on `[0, 1)`.
#[inline]
pub(crate) fn sample_row(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    // Rounding left `u` above the cumulative sum.
    last_positive
}

/// Draws one episode. Consumes exactly `H` uniforms from `rng`.
pub fn sample_episode<R: Rng + ?Sized>(policy: &DeterministicPolicy, mdp: &TabularMdp, rng: &mut R) -> Trajectory {
    let mut steps = Vec::with_capacity(mdp.horizon);
    let mut s = mdp.initial_state;
    for h in 0..mdp.horizon {
        let a = action_at(policy, h, s);
        let reward = mdp.reward(h, s, a);
        steps.push(Step { state: s, action: a, reward });
        let u: f64 = rng.random();
        s = sample_row(mdp.row(h, s, a), u);
    }
    Trajectory { steps, terminal_state: s }
}

/// The absorbing MDP: entries in `infrequent` are zeroed and their mass is
/// routed to a new absorbing state appended at index `S`, which self-loops
/// and earns no reward.
pub fn build_absorbing(mdp: &TabularMdp, infrequent: &TupleSet) -> Result<TabularMdp> {
    if mdp.absorbing.is_some() {
        return Err(Error::invalid("MDP already has an absorbing state"));
    }
    let (ns, na, nh) = (mdp.num_states, mdp.num_actions, mdp.horizon);
    if infrequent.shape() != (nh, ns, na) {
        return Err(Error::invalid(format!(
            "tuple set shape {:?} does not match MDP (H={nh}, S={ns}, A={na})",
            infrequent.shape()
        )));
    }
    let ext = ns + 1;
    let dagger = ns;
    let mut transition = vec![0.0; nh * ext * na * ext];
    let mut reward = vec![0.0; nh * ext * na];
    for h in 0..nh {
        for s in 0..ext {
            for a in 0..na {
                let idx = (h * ext + s) * na + a;
                let row = &mut transition[idx * ext..(idx + 1) * ext];
                if s == dagger {
                    row[dagger] = 1.0;
                    continue;
                }
                reward[idx] = mdp.reward(h, s, a);
                let mut kept = 0.0;
                for (next, &p) in mdp.row(h, s, a).iter().enumerate() {
                    if !infrequent.contains(h, s, a, next) {
                        row[next] = p;
                        kept += p;
                    }
                }
                row[dagger] = (1.0 - kept).max(0.0);
            }
        }
    }
    TabularMdp::new(ext, na, nh, transition, reward, mdp.initial_state, Some(dagger))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Two states, two actions, H=2. Action 0 from s0 goes to s1 surely; action 1 splits 0.3/0.7.
    fn two_step() -> TabularMdp {
        let (ns, na, nh) = (2, 2, 2);
        let mut t = vec![0.0; nh * ns * na * ns];
        let mut set = |h: usize, s: usize, a: usize, row: [f64; 2]| {
            let i = ((h * ns + s) * na + a) * ns;
            t[i..i + 2].copy_from_slice(&row);
        };
        set(0, 0, 0, [0.0, 1.0]);
        set(0, 0, 1, [0.7, 0.3]);
        set(0, 1, 0, [1.0, 0.0]);
        set(0, 1, 1, [1.0, 0.0]);
        for s in 0..2 {
            for a in 0..2 {
                set(1, s, a, [1.0, 0.0]);
            }
        }
        let mut r = vec![0.0; nh * ns * na];
        r[(ns + 1) * na] = 1.0; // r_2(s1, a0)
        r[(ns + 1) * na + 1] = 1.0; // r_2(s1, a1)
        TabularMdp::new(ns, na, nh, t, r, 0, None).unwrap()
    }

    fn policy(nh: usize, ns: usize, na: usize, acts: &[u32]) -> DeterministicPolicy {
        DeterministicPolicy::from_actions(nh, ns, na, acts.to_vec()).unwrap()
    }

    #[test]
    fn zero_reward_gives_zero_value() {
        let mdp = two_step();
        let r = RewardFunction::zeros(2, 2, 2);
        assert_eq!(value_of_policy(&policy(2, 2, 2, &[1, 0, 1, 1]), &r, &mdp).unwrap(), 0.0);
    }

    #[test]
    fn single_state_accrues_horizon() {
        let mdp = TabularMdp::new(1, 1, 3, vec![1.0; 3], vec![1.0; 3], 0, None).unwrap();
        let p = policy(3, 1, 1, &[0, 0, 0]);
        assert_eq!(value_of_policy(&p, &mdp.reward_function(), &mdp).unwrap(), 3.0);
    }

    #[test]
    fn deterministic_path_value_and_split_visitation() {
        let mdp = two_step();
        let r = mdp.reward_function();
        assert_abs_diff_eq!(value_of_policy(&policy(2, 2, 2, &[0, 0, 0, 0]), &r, &mdp).unwrap(), 1.0);
        let split = policy(2, 2, 2, &[1, 0, 0, 0]);
        let v = visitation_prob(&split, VisitTarget::state(1, 1), &mdp).unwrap();
        assert_abs_diff_eq!(v, 0.3, epsilon = 1e-15);
    }

    #[test]
    fn visitation_at_first_layer() {
        let mdp = two_step();
        let p = policy(2, 2, 2, &[1, 0, 0, 1]);
        assert_eq!(visitation_prob(&p, VisitTarget::state_action(0, 0, 1), &mdp).unwrap(), 1.0);
        assert_eq!(visitation_prob(&p, VisitTarget::state_action(0, 0, 0), &mdp).unwrap(), 0.0);
        assert_eq!(visitation_prob(&p, VisitTarget::state_action(0, 1, 0), &mdp).unwrap(), 0.0);
        assert!(visitation_prob(&p, VisitTarget::state_action(2, 0, 0), &mdp).is_err());
        assert!(visitation_prob(&p, VisitTarget::state_action(0, 5, 0), &mdp).is_err());
    }

    #[test]
    fn single_step_argmax() {
        let mdp = TabularMdp::new(1, 2, 1, vec![1.0, 1.0], vec![0.2, 0.7], 0, None).unwrap();
        let (v, p) = optimal_value_and_policy(&mdp.reward_function(), &mdp).unwrap();
        assert_eq!(v, 0.7);
        assert_eq!(p.action(0, 0), 1);
    }

    #[test]
    fn ties_go_to_lowest_action() {
        let mdp = TabularMdp::new(1, 3, 1, vec![1.0; 3], vec![0.5, 0.5, 0.5], 0, None).unwrap();
        let (_, p) = optimal_value_and_policy(&mdp.reward_function(), &mdp).unwrap();
        assert_eq!(p.action(0, 0), 0);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let mdp = two_step();
        let wrong = policy(3, 2, 2, &[0; 6]);
        assert!(matches!(value_of_policy(&wrong, &mdp.reward_function(), &mdp), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn construction_validates_rows() {
        assert!(TabularMdp::new(2, 1, 1, vec![0.6, 0.6, 1.0, 0.0], vec![0.0; 2], 0, None).is_err());
        assert!(TabularMdp::new(2, 1, 1, vec![1.5, -0.5, 1.0, 0.0], vec![0.0; 2], 0, None).is_err());
        assert!(TabularMdp::new(1, 1, 1, vec![1.0], vec![1.5], 0, None).is_err());
        let nudged = TabularMdp::new(2, 1, 1, vec![0.5, 0.5 + 1e-11, 1.0, 0.0], vec![0.0; 2], 0, None).unwrap();
        assert_eq!(nudged.row(0, 0, 0).iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn absorbing_with_empty_and_full_sets() {
        let mdp = two_step();
        let empty = TupleSet::new(2, 2, 2);
        let ext = build_absorbing(&mdp, &empty).unwrap();
        assert_eq!(ext.num_states(), 3);
        for h in 0..2 {
            for s in 0..2 {
                for a in 0..2 {
                    assert_eq!(&ext.row(h, s, a)[..2], mdp.row(h, s, a));
                    assert_eq!(ext.prob(h, s, a, 2), 0.0);
                }
            }
            for a in 0..2 {
                assert_eq!(ext.prob(h, 2, a, 2), 1.0);
            }
        }
        let full = TupleSet::full(2, 2, 2);
        let ext = build_absorbing(&mdp, &full).unwrap();
        for h in 0..2 {
            for s in 0..2 {
                for a in 0..2 {
                    assert_eq!(ext.prob(h, s, a, 2), 1.0);
                }
            }
        }
    }

    #[test]
    fn absorbing_single_tuple_moves_its_mass() {
        let mdp = two_step();
        let mut f = TupleSet::new(2, 2, 2);
        f.insert(0, 0, 1, 1);
        let ext = build_absorbing(&mdp, &f).unwrap();
        assert_eq!(ext.prob(0, 0, 1, 1), 0.0);
        assert_abs_diff_eq!(ext.prob(0, 0, 1, 2), 0.3, epsilon = 1e-15);
        for h in 0..2 {
            for s in 0..3 {
                for a in 0..2 {
                    assert_abs_diff_eq!(ext.row(h, s, a).iter().sum::<f64>(), 1.0, epsilon = 1e-12);
                }
            }
        }
        assert!(build_absorbing(&ext, &f).is_err());
        assert!(build_absorbing(&mdp, &TupleSet::new(3, 2, 2)).is_err());
    }

    #[test]
    fn file_roundtrip() {
        let mdp = two_step();
        let back = TabularMdp::from_json_str(&mdp.to_json_string()).unwrap();
        assert_eq!(back, mdp);
    }
}
