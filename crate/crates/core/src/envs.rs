//! Builtin environments and the textual environment-source syntax used by
//! the CLI and run configs.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hard_instances::HardInstanceSpec;
use crate::mdp::TabularMdp;
use crate::rng::auxiliary_rng;

/// Deterministic chain with two actions: action 0 moves one state right
/// (sticking at the end), action 1 returns to state 0. Only action 0 in the
/// last state pays 1.
pub fn chain(num_states: usize, horizon: usize) -> Result<TabularMdp> {
    if num_states == 0 || horizon == 0 {
        return Err(Error::invalid("chain needs S >= 1 and H >= 1"));
    }
    let (ns, na) = (num_states, 2);
    let mut transition = vec![0.0; horizon * ns * na * ns];
    let mut reward = vec![0.0; horizon * ns * na];
    for h in 0..horizon {
        for s in 0..ns {
            let right = ((h * ns + s) * na) * ns;
            transition[right + (s + 1).min(ns - 1)] = 1.0;
            transition[right + ns] = 1.0;
            if s == ns - 1 {
                reward[(h * ns + s) * na] = 1.0;
            }
        }
    }
    TabularMdp::new(ns, na, horizon, transition, reward, 0, None)
}

/// Random MDP: every transition row is Dirichlet(1, ..., 1) and rewards are
/// uniform on `[0, 1)`, all drawn from `seed`.
pub fn random_mdp(num_states: usize, num_actions: usize, horizon: usize, seed: u64) -> Result<TabularMdp> {
    if num_states == 0 || num_actions == 0 || horizon == 0 {
        return Err(Error::invalid("random MDP needs S, A, H >= 1"));
    }
    let mut rng = auxiliary_rng(seed, 0);
    let rows = horizon * num_states * num_actions;
    let mut transition = Vec::with_capacity(rows * num_states);
    for _ in 0..rows {
        let draws: Vec<f64> = (0..num_states).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let total: f64 = draws.iter().sum();
        transition.extend(draws.iter().map(|x| x / total));
    }
    let reward = (0..rows).map(|_| rng.random::<f64>()).collect();
    TabularMdp::new(num_states, num_actions, horizon, transition, reward, 0, None)
}

/// Where a run's environment comes from.
///
/// Text forms: `chain(S,H)`, `random(S,A,H,seed)`, `hard(S,A,H,k)` (the
/// problem-k lower-bound instance), or a path to an MDP JSON document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum EnvSource {
    Chain { states: usize, horizon: usize },
    Random { states: usize, actions: usize, horizon: usize, seed: u64 },
    Hard { states: usize, actions: usize, horizon: usize, arm: usize },
    File(PathBuf),
}

impl EnvSource {
    pub fn load(&self) -> Result<TabularMdp> {
        match self {
            EnvSource::Chain { states, horizon } => chain(*states, *horizon),
            EnvSource::Random { states, actions, horizon, seed } => random_mdp(*states, *actions, *horizon, *seed),
            EnvSource::Hard { states, actions, horizon, arm } => {
                HardInstanceSpec::problem_k(*states, *actions, *horizon, *arm)?.build()
            }
            EnvSource::File(path) => TabularMdp::load(path),
        }
    }
}

fn parse_args<const N: usize>(name: &str, inner: &str) -> Result<[u64; N]> {
    let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
    if parts.len() != N {
        return Err(Error::invalid(format!("{name}(...) takes {N} arguments, got {}", parts.len())));
    }
    let mut out = [0u64; N];
    for (slot, p) in out.iter_mut().zip(parts) {
        *slot = p.parse().map_err(|_| Error::invalid(format!("{name}: '{p}' is not a non-negative integer")))?;
    }
    Ok(out)
}

impl FromStr for EnvSource {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let t = text.trim();
        if let Some((name, rest)) = t.split_once('(') {
            let inner = rest.strip_suffix(')').ok_or_else(|| Error::invalid(format!("unterminated environment spec '{t}'")))?;
            let u = |x: u64| x as usize;
            return match name.trim() {
                "chain" => {
                    let [s, h] = parse_args::<2>("chain", inner)?;
                    Ok(EnvSource::Chain { states: u(s), horizon: u(h) })
                }
                "random" => {
                    let [s, a, h, seed] = parse_args::<4>("random", inner)?;
                    Ok(EnvSource::Random { states: u(s), actions: u(a), horizon: u(h), seed })
                }
                "hard" => {
                    let [s, a, h, k] = parse_args::<4>("hard", inner)?;
                    Ok(EnvSource::Hard { states: u(s), actions: u(a), horizon: u(h), arm: u(k) })
                }
                other => Err(Error::invalid(format!("unknown builtin environment '{other}'"))),
            };
        }
        if t.is_empty() {
            return Err(Error::invalid("empty environment spec"));
        }
        Ok(EnvSource::File(PathBuf::from(t)))
    }
}

impl TryFrom<String> for EnvSource {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<EnvSource> for String {
    fn from(e: EnvSource) -> String {
        e.to_string()
    }
}

impl fmt::Display for EnvSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvSource::Chain { states, horizon } => write!(f, "chain({states},{horizon})"),
            EnvSource::Random { states, actions, horizon, seed } => write!(f, "random({states},{actions},{horizon},{seed})"),
            EnvSource::Hard { states, actions, horizon, arm } => write!(f, "hard({states},{actions},{horizon},{arm})"),
            EnvSource::File(p) => write!(f, "{}", p.display()),
        }
    }
}
