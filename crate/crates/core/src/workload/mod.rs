//! Workload description for the heterogeneous access model: transaction
//! classes issuing lock requests against database regions (DBRs), with
//! hot-set skew, a shared-lock mix, and step-time distributions.
//!
//! A [`WorkloadSpec`] round-trips through JSON:
//!
//! ```json
//! {
//!   "classes": [
//!     { "id": "update", "frequency": 1.0, "k": [10], "s": [0.0],
//!       "step_time_dist": { "kind": "fixed", "mean": 1.0 },
//!       "restart_speedup": 1.0 }
//!   ],
//!   "dbrs": [ { "id": "main", "D": 1000, "skew": { "b": 0.8, "c": 0.2 } } ]
//! }
//! ```

mod sampler;

pub use sampler::{sample_txn, WorkloadSampler};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::analytic::{HdamClass, HdamParams};

/// Hot-set access skew of one DBR: a fraction `b` of its requests go to the
/// first `ceil(c * D)` objects.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HotSet {
    pub b: f64,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DbrSpec {
    pub id: String,
    #[serde(rename = "D")]
    pub size: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skew: Option<HotSet>,
}

impl DbrSpec {
    pub fn hot_set_size(&self) -> u64 {
        match self.skew {
            Some(h) => ((h.c * self.size as f64).ceil() as u64).clamp(1, self.size.max(1)),
            None => self.size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepTimeDist {
    Fixed { mean: f64 },
    Exponential { mean: f64 },
    Empirical { values: Vec<f64> },
}

impl StepTimeDist {
    pub fn mean(&self) -> f64 {
        match self {
            StepTimeDist::Fixed { mean } | StepTimeDist::Exponential { mean } => *mean,
            StepTimeDist::Empirical { values } if values.is_empty() => 0.0,
            StepTimeDist::Empirical { values } => values.iter().sum::<f64>() / values.len() as f64,
        }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TxnClassSpec {
    pub id: String,
    pub frequency: f64,
    /// Lock requests per DBR.
    pub k: Vec<u32>,
    /// Shared fraction of the requests per DBR; empty means exclusive only.
    #[serde(default)]
    pub s: Vec<f64>,
    pub step_time_dist: StepTimeDist,
    /// Step-time multiplier on re-execution (buffer retention).
    #[serde(default = "one")]
    pub restart_speedup: f64,
}

impl TxnClassSpec {
    pub fn total_locks(&self) -> u32 {
        self.k.iter().sum()
    }

    pub fn shared_fraction(&self, dbr: usize) -> f64 {
        self.s.get(dbr).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    pub classes: Vec<TxnClassSpec>,
    pub dbrs: Vec<DbrSpec>,
}

/// Every problem found in a spec, one message per violation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationErrors(pub Vec<String>);

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid workload: {}", self.0.join("; "))
    }
}

impl std::error::Error for ValidationErrors {}

impl WorkloadSpec {
    /// One class issuing `k` exclusive requests uniformly over `d` objects
    /// with fixed step times.
    pub fn uniform(k: u32, d: u64, step_time: f64) -> Self {
        Self {
            classes: vec![TxnClassSpec {
                id: "txn".into(),
                frequency: 1.0,
                k: vec![k],
                s: vec![0.0],
                step_time_dist: StepTimeDist::Fixed { mean: step_time },
                restart_speedup: 1.0,
            }],
            dbrs: vec![DbrSpec { id: "db".into(), size: d, skew: None }],
        }
    }

    pub fn validate(&self) -> Result<(), ValidationErrors> {
        let mut errs = Vec::new();
        if self.classes.is_empty() {
            errs.push("at least one transaction class is required".to_string());
        }
        if self.dbrs.is_empty() {
            errs.push("at least one DBR is required".to_string());
        }
        for d in &self.dbrs {
            if d.size == 0 {
                errs.push(format!("DBR {}: D must be >= 1", d.id));
            }
            if let Some(h) = d.skew {
                if !(0.0..=1.0).contains(&h.b) {
                    errs.push(format!("DBR {}: b must lie in [0,1], got {}", d.id, h.b));
                }
                if !(h.c > 0.0 && h.c < 1.0) {
                    errs.push(format!("DBR {}: c must lie in (0,1), got {}", d.id, h.c));
                }
            }
        }
        let fsum: f64 = self.classes.iter().map(|c| c.frequency).sum();
        if !self.classes.is_empty() && (fsum - 1.0).abs() > 1e-9 {
            errs.push(format!("frequencies must sum to 1 (got {fsum})"));
        }
        for c in &self.classes {
            if !(c.frequency >= 0.0 && c.frequency <= 1.0) {
                errs.push(format!("class {}: frequency must lie in [0,1]", c.id));
            }
            if c.k.len() != self.dbrs.len() {
                errs.push(format!(
                    "class {}: k has {} entries but there are {} DBRs",
                    c.id,
                    c.k.len(),
                    self.dbrs.len()
                ));
            }
            if !c.s.is_empty() && c.s.len() != self.dbrs.len() {
                errs.push(format!(
                    "class {}: s has {} entries but there are {} DBRs",
                    c.id,
                    c.s.len(),
                    self.dbrs.len()
                ));
            }
            for (j, s) in c.s.iter().enumerate() {
                if !(0.0..=1.0).contains(s) {
                    errs.push(format!("class {}: s[{j}] = {s} outside [0,1]", c.id));
                }
            }
            for (k, d) in c.k.iter().zip(&self.dbrs) {
                if u64::from(*k) > d.size {
                    errs.push(format!(
                        "class {}: cannot request {k} distinct objects from DBR {} of size {}",
                        c.id, d.id, d.size
                    ));
                }
            }
            if !(c.restart_speedup > 0.0 && c.restart_speedup <= 1.0) {
                errs.push(format!("class {}: restart_speedup must lie in (0,1]", c.id));
            }
            match &c.step_time_dist {
                StepTimeDist::Fixed { mean } | StepTimeDist::Exponential { mean } => {
                    if !(*mean >= 0.0) {
                        errs.push(format!("class {}: step time mean must be >= 0", c.id));
                    }
                }
                StepTimeDist::Empirical { values } => {
                    if values.is_empty() || values.iter().any(|v| !(*v >= 0.0)) {
                        errs.push(format!(
                            "class {}: empirical step times must be a nonempty list of values >= 0",
                            c.id
                        ));
                    }
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ValidationErrors(errs))
        }
    }

    /// Mean lock requests per transaction, `sum_i f_i k_i`.
    pub fn mean_locks(&self) -> f64 {
        self.classes.iter().map(|c| c.frequency * f64::from(c.total_locks())).sum()
    }

    /// Contention-free residence time of a class: `k + 1` steps.
    pub fn nominal_response(&self, class: usize) -> f64 {
        let c = &self.classes[class];
        f64::from(c.total_locks() + 1) * c.step_time_dist.mean()
    }

    /// Frequency-weighted mean of [`Self::nominal_response`].
    pub fn mean_nominal_response(&self) -> f64 {
        (0..self.classes.len()).map(|i| self.classes[i].frequency * self.nominal_response(i)).sum()
    }

    /// The analytic view of this workload at per-class rates `lambdas`.
    /// Requests are spread uniformly over the `k + 1` steps, so a class holds
    /// half its requested locks on average.
    pub fn hdam_params(&self, lambdas: &[f64]) -> HdamParams {
        HdamParams {
            classes: self
                .classes
                .iter()
                .zip(lambdas)
                .map(|(c, &lambda)| HdamClass {
                    lambda,
                    frequency: c.frequency,
                    k: c.k.iter().map(|&k| f64::from(k)).collect(),
                    k_bar: c.k.iter().map(|&k| f64::from(k) / 2.0).collect(),
                    s: (0..self.dbrs.len()).map(|j| c.shared_fraction(j)).collect(),
                })
                .collect(),
            dbr_sizes: self.dbrs.iter().map(|d| d.size as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ObjectId {
    pub dbr: u32,
    pub index: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LockMode {
    #[serde(rename = "S")]
    Shared,
    #[serde(rename = "X")]
    Exclusive,
}

impl LockMode {
    pub fn compatible(self, other: LockMode) -> bool {
        self == LockMode::Shared && other == LockMode::Shared
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LockRequest {
    pub object: ObjectId,
    pub mode: LockMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub duration: f64,
    pub lock: Option<LockRequest>,
}

/// `k` lock-bearing steps followed by one commit step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TxnPlan {
    pub class: usize,
    pub steps: Vec<Step>,
}

impl TxnPlan {
    pub fn lock_count(&self) -> usize {
        self.steps.iter().filter(|s| s.lock.is_some()).count()
    }

    pub fn requests(&self) -> impl Iterator<Item = LockRequest> + '_ {
        self.steps.iter().filter_map(|s| s.lock)
    }

    /// The same accesses with no locking, for a virtual first phase.
    pub fn without_locks(&self) -> TxnPlan {
        TxnPlan {
            class: self.class,
            steps: self.steps.iter().map(|s| Step { duration: s.duration, lock: None }).collect(),
        }
    }

    /// Lock preclaiming: every lock requested up front in object order with
    /// no processing in between, then the original processing with no
    /// further requests. Ordered acquisition rules out deadlock among
    /// preclaimers.
    pub fn preclaimed(&self) -> TxnPlan {
        let mut locks: Vec<LockRequest> = self.requests().collect();
        locks.sort_by_key(|r| r.object);
        let mut steps: Vec<Step> = locks.into_iter().map(|r| Step { duration: 0.0, lock: Some(r) }).collect();
        steps.extend(self.steps.iter().map(|s| Step { duration: s.duration, lock: None }));
        TxnPlan { class: self.class, steps }
    }
}
