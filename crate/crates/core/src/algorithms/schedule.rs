//! Stage lengths for the elimination learners.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    /// Every stage runs crude and fine exploration: `2 * sum T_k = K`.
    Apeve,
    /// Only stages 1 and 2 run crude exploration: `2 T_1 + 2 T_2 + sum_{k>=3} T_k = K`.
    ApevePlus,
}

/// Per-stage lengths `T_k` (episodes per exploration call).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSchedule {
    pub kind: ScheduleKind,
    pub budget: u64,
    /// Stage lengths are rounded down to multiples of this (normally `HSA`).
    pub unit: u64,
    pub stages: Vec<u64>,
}

/// `floor(K^(1 - 2^-k))`, snapping to an exact integer power when the float
/// lands within rounding of one.
fn nominal_length(budget: u64, k: u32) -> u64 {
    let x = (budget as f64).powf(1.0 - 0.5f64.powi(k as i32));
    let r = x.round();
    if (r - x).abs() <= 1e-9 * x.max(1.0) {
        r as u64
    } else {
        x.floor() as u64
    }
}

impl StageSchedule {
    /// APEVE schedule with no alignment (`unit = 1`).
    pub fn apeve(budget: u64) -> Result<Self> {
        Self::new(ScheduleKind::Apeve, budget, 1)
    }

    pub fn new(kind: ScheduleKind, budget: u64, unit: u64) -> Result<Self> {
        if budget < 4 || !budget.is_multiple_of(2) {
            return Err(Error::invalid(format!("episode budget must be even and at least 4, got {budget}")));
        }
        if unit == 0 {
            return Err(Error::invalid("stage unit must be positive"));
        }
        let mut stages: Vec<u64> = Vec::new();
        let mut consumed = 0u64;
        for k in 1u32.. {
            let weight = Self::weight_of(kind, k as usize);
            let aligned = (nominal_length(budget, k) / unit * unit).max(unit);
            if consumed + weight * aligned >= budget {
                let last = (budget - consumed) / weight;
                match stages.last_mut() {
                    // A tail too short for one episode per plan joins the previous stage.
                    // `K` even keeps `last * weight` divisible by the previous weight.
                    Some(prev) if last < unit => {
                        let prev_weight = Self::weight_of(kind, k as usize - 1);
                        *prev += last * weight / prev_weight;
                    }
                    _ => stages.push(last),
                }
                break;
            }
            stages.push(aligned);
            consumed += weight * aligned;
        }
        let schedule = Self { kind, budget, unit, stages };
        debug_assert_eq!(schedule.consumed(), budget);
        Ok(schedule)
    }

    fn weight_of(kind: ScheduleKind, k: usize) -> u64 {
        match kind {
            ScheduleKind::Apeve => 2,
            ScheduleKind::ApevePlus if k <= 2 => 2,
            ScheduleKind::ApevePlus => 1,
        }
    }

    /// Number of stages `K0`.
    pub fn stage_count(&self) -> usize {
        self.stages.len()
    }

    /// Episodes spent in stage `k` (one-based).
    pub fn episodes_in_stage(&self, k: usize) -> u64 {
        Self::weight_of(self.kind, k) * self.stages[k - 1]
    }

    pub fn consumed(&self) -> u64 {
        (1..=self.stages.len()).map(|k| self.episodes_in_stage(k)).sum()
    }
}
