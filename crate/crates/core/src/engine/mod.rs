//! Discrete-event simulator of a transaction processing system under data
//! contention.
//!
//! Transactions follow sampled [`TxnPlan`](crate::workload::TxnPlan)s:
//! each step takes its processing time and then requests its lock. Locks
//! are held until commit or abort (strict 2PL) and queued FCFS. Deadlocks
//! are detected eagerly on every block. Hardware queueing is not modelled.

pub mod lock_table;
pub mod metrics;
pub mod oracle;
mod sim;
pub mod waits_for;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ccpolicy::PolicyConfig;
use crate::loadctl::LoadControlConfig;
use crate::workload::{ValidationErrors, WorkloadSpec};

pub use lock_table::{Acquire, LockEntry, LockTable};
pub use metrics::{AbortCause, AbortCounts, ClassStats, DbrStats, HalfWidths, Integrals, ReportRow, SimReport};
pub use oracle::{is_serializable, precedence_edges, History, Op};
pub use waits_for::{chain_depth, choose_victim, find_cycle, VictimCandidate};

pub type TxnId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Mode {
    /// Poisson arrivals at rate `lambda`.
    Open { lambda: f64 },
    /// `mpl` transactions circulating with zero think time.
    Closed { mpl: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub workload: WorkloadSpec,
    pub policy: PolicyConfig,
    pub load_control: LoadControlConfig,
    pub mode: Mode,
    pub horizon: f64,
    pub warmup: f64,
    pub seed: u64,
    /// Batches for the batch-means half-widths.
    pub batches: usize,
    /// Keep committed operations for the serializability oracle, and a
    /// lock trace.
    pub record_history: bool,
    /// Verify lock-table and bookkeeping invariants after every event.
    pub check_invariants: bool,
}

impl SimConfig {
    pub fn new(workload: WorkloadSpec, mode: Mode) -> Self {
        SimConfig {
            workload,
            policy: PolicyConfig::blocking(),
            load_control: LoadControlConfig::None,
            mode,
            horizon: 10_000.0,
            warmup: 1_000.0,
            seed: 1,
            batches: 10,
            record_history: false,
            check_invariants: false,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.workload.validate()?;
        if !(self.warmup >= 0.0) || !(self.horizon > self.warmup) || !self.horizon.is_finite() {
            return Err(SimError::Config(format!(
                "need 0 <= warmup < horizon (warmup={}, horizon={})",
                self.warmup, self.horizon
            )));
        }
        if self.batches < 1 {
            return Err(SimError::Config("batches must be >= 1".into()));
        }
        match self.mode {
            Mode::Open { lambda } if !(lambda >= 0.0) || !lambda.is_finite() => {
                Err(SimError::Config(format!("arrival rate must be finite and >= 0, got {lambda}")))
            }
            Mode::Closed { mpl: 0 } => Err(SimError::Config("closed mode needs mpl >= 1".into())),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid workload: {0}")]
    Workload(#[from] ValidationErrors),
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("engine invariant violated at t={time}: {what}")]
    Invariant { time: f64, what: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    Grant,
    Block,
    Release,
    Commit,
    Abort,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub time: f64,
    pub txn: TxnId,
    pub kind: TraceKind,
}

/// Everything a run produces when `record_history` is set.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunArtifacts {
    pub history: History,
    pub trace: Vec<TraceEvent>,
}

pub fn run(cfg: &SimConfig) -> Result<SimReport, SimError> {
    Ok(sim::simulate(cfg)?.0)
}

pub fn run_with_artifacts(cfg: &SimConfig) -> Result<(SimReport, RunArtifacts), SimError> {
    sim::simulate(cfg)
}

/// Seeds `base, base+1, ...`.
pub fn replication_seeds(base: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| base.wrapping_add(i)).collect()
}

/// Independent runs of `cfg` under each seed, in parallel, returned in
/// seed order.
pub fn run_replications(cfg: &SimConfig, seeds: &[u64]) -> Result<Vec<SimReport>, SimError> {
    cfg.validate()?;
    seeds.par_iter().map(|&seed| run(&SimConfig { seed, ..cfg.clone() })).collect()
}
