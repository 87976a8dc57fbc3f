use serde::{Deserialize, Serialize};

use crate::workload::TxnPlan;

/// Multiphase execution options for the lock-based policies.
///
/// With `virtual_first_phase` a transaction first runs its plan with no
/// locks (prefetching its data), then re-runs it under locking at the
/// class's restart speedup. With `preclaim` the locking run requests every
/// lock up front in object order before any processing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Multiphase {
    pub virtual_first_phase: bool,
    pub preclaim: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Virtual,
    Locking,
}

impl Multiphase {
    pub fn first_phase(&self) -> Phase {
        if self.virtual_first_phase {
            Phase::Virtual
        } else {
            Phase::Locking
        }
    }

    /// The steps actually executed in `phase`.
    pub fn phase_plan(&self, plan: &TxnPlan, phase: Phase) -> TxnPlan {
        match phase {
            Phase::Virtual => plan.without_locks(),
            Phase::Locking if self.preclaim => plan.preclaimed(),
            Phase::Locking => plan.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{LockMode, LockRequest, ObjectId, Step};

    fn plan() -> TxnPlan {
        let req = |i| Some(LockRequest { object: ObjectId { dbr: 0, index: i }, mode: LockMode::Exclusive });
        TxnPlan {
            class: 0,
            steps: vec![
                Step { duration: 1.0, lock: req(9) },
                Step { duration: 2.0, lock: req(3) },
                Step { duration: 3.0, lock: None },
            ],
        }
    }

    #[test]
    fn phases() {
        let p = plan();
        let plain = Multiphase::default();
        assert_eq!(plain.first_phase(), Phase::Locking);
        assert_eq!(plain.phase_plan(&p, Phase::Locking), p);

        let both = Multiphase { virtual_first_phase: true, preclaim: true };
        assert_eq!(both.first_phase(), Phase::Virtual);
        let v = both.phase_plan(&p, Phase::Virtual);
        assert_eq!(v.lock_count(), 0);
        assert_eq!(v.steps.len(), 3);

        let pre = both.phase_plan(&p, Phase::Locking);
        assert_eq!(pre.steps.len(), 5);
        assert_eq!(pre.steps[0].lock.unwrap().object.index, 3);
        assert_eq!(pre.steps[1].lock.unwrap().object.index, 9);
        assert!(pre.steps[..2].iter().all(|s| s.duration == 0.0));
        assert!(pre.steps[2..].iter().all(|s| s.lock.is_none()));
        let total: f64 = pre.steps.iter().map(|s| s.duration).sum();
        assert_eq!(total, 6.0);
    }
}
