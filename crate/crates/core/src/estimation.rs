//! Transition counting, the infrequent-tuple set and the layer-wise
//! absorbing-kernel estimator.

use bitvec::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{TabularMdp, Trajectory};

/// Multiplier of `H^2 * iota` in the infrequent-tuple threshold.
pub const INFREQUENT_CONSTANT: f64 = 6.0;

/// An absorbing kernel over `S + 1` states (`P^int`, `P-hat`, or an exact `P-tilde`).
pub type TransitionEstimate = TabularMdp;

/// `iota = log(2 H A K / delta)`.
pub fn log_confidence(horizon: usize, num_actions: usize, episodes: u64, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    if episodes == 0 {
        return Err(Error::invalid("episode budget must be positive"));
    }
    Ok((2.0 * horizon as f64 * num_actions as f64 * episodes as f64 / delta).ln())
}

/// `6 H^2 iota`, the count at or below which a tuple is infrequent.
pub fn infrequent_threshold(horizon: usize, iota: f64) -> Result<f64> {
    if !iota.is_finite() || iota <= 0.0 {
        return Err(Error::invalid(format!("iota must be positive, got {iota}")));
    }
    let h = horizon as f64;
    Ok(INFREQUENT_CONSTANT * h * h * iota)
}

/// Counts `N_h(s, a, s')` and `N_h(s, a)` for one layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCounts {
    layer: usize,
    num_states: usize,
    num_actions: usize,
    transitions: Vec<u64>,
    pairs: Vec<u64>,
}

impl LayerCounts {
    pub fn new(layer: usize, num_states: usize, num_actions: usize) -> Self {
        Self {
            layer,
            num_states,
            num_actions,
            transitions: vec![0; num_states * num_actions * num_states],
            pairs: vec![0; num_states * num_actions],
        }
    }

    pub fn layer(&self) -> usize {
        self.layer
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn record(&mut self, s: usize, a: usize, next: usize) {
        let pair = s * self.num_actions + a;
        self.pairs[pair] += 1;
        self.transitions[pair * self.num_states + next] += 1;
    }

    /// Tallies layer `self.layer()` of one trajectory. Transitions into a
    /// state outside the counted range (never the case for the true MDP)
    /// are ignored.
    pub fn record_trajectory(&mut self, traj: &Trajectory) {
        let h = self.layer;
        let step = traj.steps[h];
        let next = traj.next_state(h);
        if step.state < self.num_states && next < self.num_states {
            self.record(step.state, step.action, next);
        }
    }

    pub fn merge(&mut self, other: &Self) {
        debug_assert_eq!((self.layer, self.num_states, self.num_actions), (other.layer, other.num_states, other.num_actions));
        self.transitions.iter_mut().zip(&other.transitions).for_each(|(a, b)| *a += b);
        self.pairs.iter_mut().zip(&other.pairs).for_each(|(a, b)| *a += b);
    }

    #[inline]
    pub fn transition(&self, s: usize, a: usize, next: usize) -> u64 {
        self.transitions[(s * self.num_actions + a) * self.num_states + next]
    }

    #[inline]
    pub fn pair(&self, s: usize, a: usize) -> u64 {
        self.pairs[s * self.num_actions + a]
    }

    pub fn total(&self) -> u64 {
        self.pairs.iter().sum()
    }
}

/// Tallies layer `h` over a dataset.
pub fn count_layer<'a>(
    dataset: impl IntoIterator<Item = &'a Trajectory>,
    h: usize,
    num_states: usize,
    num_actions: usize,
) -> Result<LayerCounts> {
    let mut counts = LayerCounts::new(h, num_states, num_actions);
    for traj in dataset {
        if traj.steps.len() <= h {
            return Err(Error::invalid(format!("trajectory of length {} has no layer {h}", traj.steps.len())));
        }
        counts.record_trajectory(traj);
    }
    Ok(counts)
}

/// Set `F` of infrequent `(h, s, a, s')` tuples over the original states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TupleSet {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    bits: BitVec<u64, Lsb0>,
}

impl TupleSet {
    pub fn new(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        Self { horizon, num_states, num_actions, bits: bitvec![u64, Lsb0; 0; horizon * num_states * num_actions * num_states] }
    }

    pub fn full(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        let mut set = Self::new(horizon, num_states, num_actions);
        set.bits.fill(true);
        set
    }

    /// `(H, S, A)`
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.horizon, self.num_states, self.num_actions)
    }

    #[inline]
    fn index(&self, h: usize, s: usize, a: usize, next: usize) -> usize {
        ((h * self.num_states + s) * self.num_actions + a) * self.num_states + next
    }

    #[inline]
    pub fn contains(&self, h: usize, s: usize, a: usize, next: usize) -> bool {
        self.bits[self.index(h, s, a, next)]
    }

    pub fn insert(&mut self, h: usize, s: usize, a: usize, next: usize) {
        let i = self.index(h, s, a, next);
        self.bits.set(i, true);
    }

    pub fn try_insert(&mut self, h: usize, s: usize, a: usize, next: usize) -> Result<()> {
        if h >= self.horizon || s >= self.num_states || a >= self.num_actions || next >= self.num_states {
            return Err(Error::invalid(format!("tuple ({h},{s},{a},{next}) out of range")));
        }
        self.insert(h, s, a, next);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.bits.count_ones()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.not_any()
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.shape() == other.shape() && self.bits.iter_ones().all(|i| other.bits[i])
    }

    /// Tuples in increasing `(h, s, a, s')` order.
    pub fn iter(&self) -> impl Iterator<Item = [usize; 4]> + '_ {
        let (ns, na) = (self.num_states, self.num_actions);
        self.bits.iter_ones().map(move |i| {
            let next = i % ns;
            let rest = i / ns;
            [rest / (na * ns), (rest / na) % ns, rest % na, next]
        })
    }
}

impl Serialize for TupleSet {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr {
            horizon: usize,
            states: usize,
            actions: usize,
            tuples: Vec<[usize; 4]>,
        }
        Repr { horizon: self.horizon, states: self.num_states, actions: self.num_actions, tuples: self.iter().collect() }
            .serialize(ser)
    }
}

/// Adds every tuple of layer `counts.layer()` with `N_h(s,a,s') <= threshold`.
pub fn update_infrequent(set: &mut TupleSet, counts: &LayerCounts, threshold: f64) -> Result<()> {
    if threshold.is_nan() || threshold <= 0.0 {
        return Err(Error::invalid(format!("threshold must be positive, got {threshold}")));
    }
    let (nh, ns, na) = set.shape();
    if counts.layer >= nh || counts.num_states != ns || counts.num_actions != na {
        return Err(Error::invalid("layer counts do not match the tuple set shape"));
    }
    let h = counts.layer;
    for s in 0..ns {
        for a in 0..na {
            for next in 0..ns {
                if counts.transition(s, a, next) as f64 <= threshold {
                    set.insert(h, s, a, next);
                }
            }
        }
    }
    Ok(())
}

/// Copy of `base` with layer `counts.layer()` re-estimated from `counts`:
/// tuples in `infrequent` get 0, the rest their empirical frequency, and the
/// absorbing state takes the remaining mass.
///
/// A pair with no samples whose row still has tuples outside `infrequent`
/// keeps `base`'s row (with the infrequent entries moved to the absorbing
/// state); this only arises when `infrequent` came from a different dataset.
pub fn estimate_transition(counts: &LayerCounts, infrequent: &TupleSet, base: &TransitionEstimate) -> Result<TransitionEstimate> {
    let Some(dagger) = base.absorbing() else {
        return Err(Error::invalid("base kernel must carry an absorbing state"));
    };
    let (nh, ns, na) = infrequent.shape();
    if base.horizon() != nh || base.num_original_states() != ns || base.num_actions() != na || dagger != ns {
        return Err(Error::invalid("base kernel shape does not match the tuple set"));
    }
    if counts.layer >= nh || counts.num_states != ns || counts.num_actions != na {
        return Err(Error::invalid("layer counts do not match the tuple set shape"));
    }
    let h = counts.layer;
    let mut out = base.clone();
    out.replace_layer(h, |s, a, row| {
        if s == dagger {
            row.fill(0.0);
            row[dagger] = 1.0;
            return;
        }
        let n = counts.pair(s, a);
        let all_infrequent = (0..ns).all(|next| infrequent.contains(h, s, a, next));
        let old: Vec<f64> = base.row(h, s, a).to_vec();
        let mut kept = 0.0;
        for next in 0..ns {
            row[next] = if infrequent.contains(h, s, a, next) {
                0.0
            } else if n > 0 {
                counts.transition(s, a, next) as f64 / n as f64
            } else if all_infrequent {
                0.0
            } else {
                old[next]
            };
            kept += row[next];
        }
        row[dagger] = (1.0 - kept).max(0.0);
    });
    Ok(out)
}

/// `(1 - theta) P' <= P'' <= (1 + theta) P'` entrywise over original-state
/// destinations; the absorbing column is exempt.
pub fn check_multiplicative_accuracy(reference: &TransitionEstimate, other: &TransitionEstimate, theta: f64) -> Result<bool> {
    let same_shape = reference.num_states() == other.num_states()
        && reference.num_actions() == other.num_actions()
        && reference.horizon() == other.horizon()
        && reference.absorbing() == other.absorbing();
    if !same_shape || reference.absorbing().is_none() {
        return Err(Error::invalid("kernels must be absorbing and share one shape"));
    }
    let ns = reference.num_original_states();
    for h in 0..reference.horizon() {
        for s in 0..ns {
            for a in 0..reference.num_actions() {
                let (p1, p2) = (reference.row(h, s, a), other.row(h, s, a));
                for next in 0..ns {
                    if p2[next] < (1.0 - theta) * p1[next] || p2[next] > (1.0 + theta) * p1[next] {
                        return Ok(false);
                    }
                }
            }
        }
    }
    Ok(true)
}
