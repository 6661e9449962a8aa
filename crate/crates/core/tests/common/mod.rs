//! Independent oracles shared by the integration tests. Nothing here calls
//! the library's evaluators or planners.

#![allow(dead_code, clippy::needless_range_loop)]

use lowswitch::mdp::{RewardFunction, TabularMdp};
use lowswitch::policy_space::{DeterministicPolicy, PolicyShape};

/// Expected return by pushing the state distribution forward layer by layer.
pub fn forward_value(policy: &DeterministicPolicy, reward: &RewardFunction, mdp: &TabularMdp) -> f64 {
    let ns = mdp.num_states();
    let mut dist = vec![0.0; ns];
    dist[mdp.initial_state()] = 1.0;
    let mut total = 0.0;
    for h in 0..mdp.horizon() {
        let mut next = vec![0.0; ns];
        for s in 0..ns {
            if dist[s] == 0.0 {
                continue;
            }
            let a = if s < policy.num_states() { policy.action(h, s) } else { 0 };
            let r = if s < reward.num_states() && Some(s) != mdp.absorbing() { reward.get(h, s, a) } else { 0.0 };
            total += dist[s] * r;
            for (t, p) in mdp.row(h, s, a).iter().enumerate() {
                next[t] += dist[s] * p;
            }
        }
        dist = next;
    }
    total
}

/// Maximum of [`forward_value`] over every deterministic policy.
pub fn brute_force_best(reward: &RewardFunction, mdp: &TabularMdp) -> (u64, f64) {
    let shape = PolicyShape::of(mdp);
    let mut best = (0, f64::NEG_INFINITY);
    for i in 0..shape.count().unwrap() {
        let v = forward_value(&shape.decode(i).unwrap(), reward, mdp);
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// Least-squares slope of `ys` against `xs`.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}
