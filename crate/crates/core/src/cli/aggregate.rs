use serde::{Deserialize, Serialize};

use crate::engine::SimReport;
use crate::stats::Estimate;

/// Replication means with 95% t-based half-widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub scenario: String,
    pub policy: String,
    pub load_control: String,
    pub replications: usize,
    pub seeds: Vec<u64>,
    pub committed: u64,
    pub throughput: Estimate,
    #[serde(rename = "R")]
    pub response_time: Estimate,
    pub p_c: Estimate,
    pub beta: Estimate,
    #[serde(rename = "CR")]
    pub conflict_ratio: Estimate,
    pub rho: Estimate,
    #[serde(rename = "L")]
    pub l_total: Estimate,
    pub mean_in_system: Estimate,
    pub deadlocks_per_commit: Estimate,
    pub aborts_per_commit: Estimate,
    pub deadlocks: u64,
    pub watchdog_hits: u64,
    pub max_blocking_level: u32,
    pub per_dbr_p_c: Vec<Estimate>,
    pub per_class_response: Vec<Estimate>,
}

fn per_commit(n: u64, r: &SimReport) -> f64 {
    if r.committed > 0 {
        n as f64 / r.committed as f64
    } else {
        0.0
    }
}

impl Aggregate {
    pub fn of(scenario: &str, load_control: &str, reports: &[SimReport]) -> Self {
        let est = |f: &dyn Fn(&SimReport) -> f64| Estimate::of(&reports.iter().map(f).collect::<Vec<_>>());
        let dbrs = reports.first().map_or(0, |r| r.per_dbr.len());
        let classes = reports.first().map_or(0, |r| r.per_class.len());
        Aggregate {
            scenario: scenario.to_string(),
            policy: reports.first().map(|r| r.policy.clone()).unwrap_or_default(),
            load_control: load_control.to_string(),
            replications: reports.len(),
            seeds: reports.iter().map(|r| r.seed).collect(),
            committed: reports.iter().map(|r| r.committed).sum(),
            throughput: est(&|r| r.throughput),
            response_time: est(&|r| r.response_time),
            p_c: est(&|r| r.p_c),
            beta: est(&|r| r.beta),
            conflict_ratio: est(&|r| r.conflict_ratio),
            rho: est(&|r| r.rho),
            l_total: est(&|r| r.l_total),
            mean_in_system: est(&|r| r.mean_in_system),
            deadlocks_per_commit: est(&|r| per_commit(r.deadlocks, r)),
            aborts_per_commit: est(&|r| per_commit(r.aborts.total(), r)),
            deadlocks: reports.iter().map(|r| r.deadlocks).sum(),
            watchdog_hits: reports.iter().map(|r| r.watchdog_hits).sum(),
            max_blocking_level: reports.iter().map(|r| r.max_blocking_level).max().unwrap_or(0),
            per_dbr_p_c: (0..dbrs).map(|j| est(&|r| r.per_dbr[j].p_c)).collect(),
            per_class_response: (0..classes).map(|i| est(&|r| r.per_class[i].response_time)).collect(),
        }
    }
}

/// One long-form sweep row. Columns in field order: axis, value, policy,
/// replications, committed, then mean and half-width pairs for throughput,
/// R, p_c, beta, CR, rho, and deadlocks and aborts per commit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: String,
    pub policy: String,
    pub replications: usize,
    pub committed: u64,
    pub throughput: f64,
    pub throughput_ci: f64,
    #[serde(rename = "R")]
    pub response_time: f64,
    #[serde(rename = "R_ci")]
    pub response_time_ci: f64,
    pub p_c: f64,
    pub p_c_ci: f64,
    pub beta: f64,
    pub beta_ci: f64,
    #[serde(rename = "CR")]
    pub conflict_ratio: f64,
    #[serde(rename = "CR_ci")]
    pub conflict_ratio_ci: f64,
    pub rho: f64,
    pub rho_ci: f64,
    pub deadlocks_per_commit: f64,
    pub aborts_per_commit: f64,
}

impl SweepRow {
    pub fn new(axis: &str, value: &str, a: &Aggregate) -> Self {
        SweepRow {
            axis: axis.into(),
            value: value.into(),
            policy: a.policy.clone(),
            replications: a.replications,
            committed: a.committed,
            throughput: a.throughput.mean,
            throughput_ci: a.throughput.half_width,
            response_time: a.response_time.mean,
            response_time_ci: a.response_time.half_width,
            p_c: a.p_c.mean,
            p_c_ci: a.p_c.half_width,
            beta: a.beta.mean,
            beta_ci: a.beta.half_width,
            conflict_ratio: a.conflict_ratio.mean,
            conflict_ratio_ci: a.conflict_ratio.half_width,
            rho: a.rho.mean,
            rho_ci: a.rho.half_width,
            deadlocks_per_commit: a.deadlocks_per_commit.mean,
            aborts_per_commit: a.aborts_per_commit.mean,
        }
    }
}
