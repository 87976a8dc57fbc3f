use serde::{Deserialize, Serialize};

use crate::stats::batch_half_width;

/// Time integrals and counters, accumulated from time zero. Reports use
/// the difference between two snapshots.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Integrals {
    pub time: f64,
    pub locks_active: f64,
    pub locks_blocked: f64,
    pub blocked: f64,
    pub executing: f64,
    pub in_system: f64,
    pub admitted: f64,
    pub requests: u64,
    pub conflicts: u64,
    pub commits: u64,
    pub response_sum: f64,
}

impl Integrals {
    pub fn since(&self, base: &Integrals) -> Integrals {
        Integrals {
            time: self.time - base.time,
            locks_active: self.locks_active - base.locks_active,
            locks_blocked: self.locks_blocked - base.locks_blocked,
            blocked: self.blocked - base.blocked,
            executing: self.executing - base.executing,
            in_system: self.in_system - base.in_system,
            admitted: self.admitted - base.admitted,
            requests: self.requests - base.requests,
            conflicts: self.conflicts - base.conflicts,
            commits: self.commits - base.commits,
            response_sum: self.response_sum - base.response_sum,
        }
    }

    pub fn p_c(&self) -> f64 {
        ratio(self.conflicts as f64, self.requests as f64)
    }

    pub fn beta(&self) -> f64 {
        ratio(self.blocked, self.executing)
    }

    /// `(CR, rho)` with `CR = L / L_a` and `rho = L_b / L`; an interval
    /// with no locks held reads as uncontended.
    pub fn conflict_ratio(&self) -> (f64, f64) {
        let total = self.locks_active + self.locks_blocked;
        if total <= 0.0 {
            return (1.0, 0.0);
        }
        let cr = if self.locks_active > 0.0 { total / self.locks_active } else { f64::INFINITY };
        (cr, self.locks_blocked / total)
    }

    pub fn throughput(&self) -> f64 {
        ratio(self.commits as f64, self.time)
    }

    pub fn response_time(&self) -> f64 {
        ratio(self.response_sum, self.commits as f64)
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbortCause {
    Deadlock,
    /// The requester aborted itself under the policy.
    Policy,
    /// Aborted by a requester under the policy (wounded or displaced).
    Wounded,
    /// Optimistic validation failed.
    Validation,
    /// Killed by a committing optimistic transaction.
    Killed,
    /// Cancelled by load control and returned to the admission queue.
    Cancelled,
    /// Dropped for good after exhausting its attempts.
    Permanent,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbortCounts {
    pub deadlock: u64,
    pub policy: u64,
    pub wounded: u64,
    pub validation: u64,
    pub killed: u64,
    pub cancelled: u64,
    pub permanent: u64,
}

impl AbortCounts {
    pub fn add(&mut self, cause: AbortCause) {
        *match cause {
            AbortCause::Deadlock => &mut self.deadlock,
            AbortCause::Policy => &mut self.policy,
            AbortCause::Wounded => &mut self.wounded,
            AbortCause::Validation => &mut self.validation,
            AbortCause::Killed => &mut self.killed,
            AbortCause::Cancelled => &mut self.cancelled,
            AbortCause::Permanent => &mut self.permanent,
        } += 1;
    }

    /// Restarts, i.e. everything except load-control cancellations and
    /// permanent drops.
    pub fn restarts(&self) -> u64 {
        self.deadlock + self.policy + self.wounded + self.validation + self.killed
    }

    pub fn total(&self) -> u64 {
        self.restarts() + self.cancelled + self.permanent
    }

    fn since(&self, b: &AbortCounts) -> AbortCounts {
        AbortCounts {
            deadlock: self.deadlock - b.deadlock,
            policy: self.policy - b.policy,
            wounded: self.wounded - b.wounded,
            validation: self.validation - b.validation,
            killed: self.killed - b.killed,
            cancelled: self.cancelled - b.cancelled,
            permanent: self.permanent - b.permanent,
        }
    }
}

/// Everything the engine accumulates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Totals {
    pub integrals: Integrals,
    pub class_commits: Vec<u64>,
    pub class_response: Vec<f64>,
    pub dbr_requests: Vec<u64>,
    pub dbr_conflicts: Vec<u64>,
    pub aborts: AbortCounts,
    pub deadlocks: u64,
    pub deadlocks_2way: u64,
    pub watchdog_hits: u64,
}

impl Totals {
    pub fn new(classes: usize, dbrs: usize) -> Self {
        Totals {
            class_commits: vec![0; classes],
            class_response: vec![0.0; classes],
            dbr_requests: vec![0; dbrs],
            dbr_conflicts: vec![0; dbrs],
            ..Default::default()
        }
    }

    pub fn since(&self, b: &Totals) -> Totals {
        let sub_u = |x: &[u64], y: &[u64]| x.iter().zip(y).map(|(a, b)| a - b).collect();
        Totals {
            integrals: self.integrals.since(&b.integrals),
            class_commits: sub_u(&self.class_commits, &b.class_commits),
            class_response: self.class_response.iter().zip(&b.class_response).map(|(a, b)| a - b).collect(),
            dbr_requests: sub_u(&self.dbr_requests, &b.dbr_requests),
            dbr_conflicts: sub_u(&self.dbr_conflicts, &b.dbr_conflicts),
            aborts: self.aborts.since(&b.aborts),
            deadlocks: self.deadlocks - b.deadlocks,
            deadlocks_2way: self.deadlocks_2way - b.deadlocks_2way,
            watchdog_hits: self.watchdog_hits - b.watchdog_hits,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub id: String,
    pub committed: u64,
    pub throughput: f64,
    pub response_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbrStats {
    pub id: String,
    pub requests: u64,
    pub conflicts: u64,
    pub p_c: f64,
}

/// 95% batch-means half-widths; NaN when fewer than two batches had data.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct HalfWidths {
    pub throughput: f64,
    pub response_time: f64,
    pub p_c: f64,
    pub beta: f64,
}

impl HalfWidths {
    pub fn from_batches(batches: &[Integrals]) -> Self {
        let pick = |f: &dyn Fn(&Integrals) -> Option<f64>| -> f64 {
            let xs: Vec<f64> = batches.iter().filter_map(f).collect();
            batch_half_width(&xs)
        };
        HalfWidths {
            throughput: pick(&|b| (b.time > 0.0).then(|| b.throughput())),
            response_time: pick(&|b| (b.commits > 0).then(|| b.response_time())),
            p_c: pick(&|b| (b.requests > 0).then(|| b.p_c())),
            beta: pick(&|b| (b.executing > 0.0).then(|| b.beta())),
        }
    }
}

/// Post-warmup results of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub policy: String,
    pub seed: u64,
    /// Length of the measured interval.
    pub elapsed: f64,
    pub committed: u64,
    pub throughput: f64,
    #[serde(rename = "R")]
    pub response_time: f64,
    pub requests: u64,
    pub conflicts: u64,
    pub p_c: f64,
    pub beta: f64,
    #[serde(rename = "L")]
    pub l_total: f64,
    #[serde(rename = "L_a")]
    pub l_active: f64,
    #[serde(rename = "L_b")]
    pub l_blocked: f64,
    #[serde(rename = "CR")]
    pub conflict_ratio: f64,
    pub rho: f64,
    /// Time-average transactions in the system (queued or admitted).
    pub mean_in_system: f64,
    /// Time-average executing transactions (running or blocked).
    pub mean_executing: f64,
    pub deadlocks: u64,
    pub deadlocks_2way: u64,
    /// Deadlocks detected under a method that should never form them.
    pub watchdog_hits: u64,
    pub max_blocking_level: u32,
    pub aborts: AbortCounts,
    pub load_alarm: bool,
    pub per_class: Vec<ClassStats>,
    pub per_dbr: Vec<DbrStats>,
    pub ci: HalfWidths,
}

/// Flat CSV form of a [`SimReport`]. Columns appear in field order:
/// seed, policy, elapsed, committed, throughput, R, requests, conflicts,
/// p_c, beta, L, L_a, L_b, CR, rho, mean_in_system, mean_executing,
/// deadlocks, deadlocks_2way, watchdog_hits, max_blocking_level,
/// the seven abort counts, load_alarm, then the four CI half-widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub seed: u64,
    pub policy: String,
    pub elapsed: f64,
    pub committed: u64,
    pub throughput: f64,
    #[serde(rename = "R")]
    pub response_time: f64,
    pub requests: u64,
    pub conflicts: u64,
    pub p_c: f64,
    pub beta: f64,
    #[serde(rename = "L")]
    pub l_total: f64,
    #[serde(rename = "L_a")]
    pub l_active: f64,
    #[serde(rename = "L_b")]
    pub l_blocked: f64,
    #[serde(rename = "CR")]
    pub conflict_ratio: f64,
    pub rho: f64,
    pub mean_in_system: f64,
    pub mean_executing: f64,
    pub deadlocks: u64,
    pub deadlocks_2way: u64,
    pub watchdog_hits: u64,
    pub max_blocking_level: u32,
    pub aborts_deadlock: u64,
    pub aborts_policy: u64,
    pub aborts_wounded: u64,
    pub aborts_validation: u64,
    pub aborts_killed: u64,
    pub aborts_cancelled: u64,
    pub aborts_permanent: u64,
    pub load_alarm: bool,
    pub ci_throughput: f64,
    #[serde(rename = "ci_R")]
    pub ci_response_time: f64,
    pub ci_p_c: f64,
    pub ci_beta: f64,
}

impl SimReport {
    pub fn row(&self) -> ReportRow {
        ReportRow {
            seed: self.seed,
            policy: self.policy.clone(),
            elapsed: self.elapsed,
            committed: self.committed,
            throughput: self.throughput,
            response_time: self.response_time,
            requests: self.requests,
            conflicts: self.conflicts,
            p_c: self.p_c,
            beta: self.beta,
            l_total: self.l_total,
            l_active: self.l_active,
            l_blocked: self.l_blocked,
            conflict_ratio: self.conflict_ratio,
            rho: self.rho,
            mean_in_system: self.mean_in_system,
            mean_executing: self.mean_executing,
            deadlocks: self.deadlocks,
            deadlocks_2way: self.deadlocks_2way,
            watchdog_hits: self.watchdog_hits,
            max_blocking_level: self.max_blocking_level,
            aborts_deadlock: self.aborts.deadlock,
            aborts_policy: self.aborts.policy,
            aborts_wounded: self.aborts.wounded,
            aborts_validation: self.aborts.validation,
            aborts_killed: self.aborts.killed,
            aborts_cancelled: self.aborts.cancelled,
            aborts_permanent: self.aborts.permanent,
            load_alarm: self.load_alarm,
            ci_throughput: self.ci.throughput,
            ci_response_time: self.ci.response_time,
            ci_p_c: self.ci.p_c,
            ci_beta: self.ci.beta,
        }
    }

    /// Deadlocks per committed transaction.
    pub fn deadlock_rate(&self) -> f64 {
        ratio(self.deadlocks as f64, self.committed as f64)
    }
}
