use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::analytic::DeadlockVariant;
use crate::ccpolicy::{PolicyConfig, PolicySpec};
use crate::engine::{Mode, SimConfig};
use crate::loadctl::{LoadControlConfig, LoadControlSpec};
use crate::workload::WorkloadSpec;

/// A scenario file. Unknown fields are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: Option<String>,
    /// Inline workload; exclusive with `workload_file`.
    #[serde(default)]
    pub workload: Option<WorkloadSpec>,
    /// Workload JSON path, relative to the scenario file.
    #[serde(default)]
    pub workload_file: Option<PathBuf>,
    pub mode: Mode,
    #[serde(default = "default_policy")]
    pub policy: PolicySpec,
    #[serde(default = "default_load_control")]
    pub load_control: LoadControlSpec,
    pub horizon: f64,
    #[serde(default)]
    pub warmup: f64,
    #[serde(default = "one")]
    pub replications: usize,
    #[serde(default = "one_u64")]
    pub seed: u64,
    #[serde(default)]
    pub batches: Option<usize>,
    #[serde(default)]
    pub output: Option<OutputSpec>,
    #[serde(default)]
    pub analysis: AnalysisSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
}

/// Inputs used only by the analytic side.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    #[serde(default)]
    pub qn: Option<QnSpec>,
    /// Normalized first-level wait `A`; defaults to 1/3.
    #[serde(default, rename = "A")]
    pub first_level_wait: Option<f64>,
    /// Database size the analytic side assumes for every DBR in place of
    /// the workload's own.
    #[serde(default)]
    pub assumed_db_size: Option<f64>,
    #[serde(default)]
    pub deadlock_variant: Option<DeadlockVariant>,
}

/// Open queueing network for the hardware side of the analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QnSpec {
    /// Service demand per device, in `time_unit`.
    pub demands: Vec<f64>,
    /// Arrival rate per `time_unit`.
    pub lambda: f64,
    #[serde(default)]
    pub lambda_prime: Option<f64>,
    /// Conflict probability measured at `lambda`, to extrapolate.
    #[serde(default)]
    pub p_c: Option<f64>,
    #[serde(default)]
    pub time_unit: Option<TimeUnit>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeUnit {
    Ms,
    S,
}

impl TimeUnit {
    pub fn per_second(self) -> f64 {
        match self {
            TimeUnit::Ms => 1000.0,
            TimeUnit::S => 1.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            TimeUnit::Ms => "ms",
            TimeUnit::S => "s",
        }
    }
}

fn default_policy() -> PolicySpec {
    PolicyConfig::blocking().to_spec()
}

fn default_load_control() -> LoadControlSpec {
    LoadControlConfig::None.to_spec()
}

fn one() -> usize {
    1
}

fn one_u64() -> u64 {
    1
}

/// A scenario with its workload loaded and its specs parsed.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub scenario: Scenario,
    pub workload: WorkloadSpec,
    pub policy: PolicyConfig,
    pub load_control: LoadControlConfig,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Resolved> {
        let text = fs::read_to_string(path).with_context(|| format!("reading scenario {}", path.display()))?;
        let scenario = Self::from_json(&text).with_context(|| format!("parsing scenario {}", path.display()))?;
        scenario.resolve(path.parent().unwrap_or(Path::new(".")))
    }

    /// Loads the workload (relative to `base`) and checks every field.
    pub fn resolve(self, base: &Path) -> Result<Resolved> {
        let workload = match (&self.workload, &self.workload_file) {
            (Some(w), None) => w.clone(),
            (None, Some(p)) => {
                let path = base.join(p);
                let text = fs::read_to_string(&path).with_context(|| format!("reading workload {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing workload {}", path.display()))?
            }
            _ => bail!("scenario needs exactly one of `workload` and `workload_file`"),
        };
        workload.validate()?;
        if self.replications < 1 {
            bail!("replications must be >= 1");
        }
        if !(self.warmup >= 0.0) || !(self.horizon > self.warmup) {
            bail!("need horizon > warmup >= 0 (horizon={}, warmup={})", self.horizon, self.warmup);
        }
        let policy = PolicyConfig::from_spec(&self.policy)?;
        let load_control = LoadControlConfig::from_spec(&self.load_control)?;
        if let Some(a) = self.analysis.first_level_wait {
            if !(a > 0.0) {
                bail!("analysis.A must be > 0");
            }
        }
        let resolved = Resolved { scenario: self, workload, policy, load_control };
        resolved.sim_config(resolved.scenario.seed).validate()?;
        Ok(resolved)
    }
}

impl Resolved {
    pub fn name(&self) -> &str {
        self.scenario.name.as_deref().unwrap_or("scenario")
    }

    pub fn sim_config(&self, seed: u64) -> SimConfig {
        let s = &self.scenario;
        SimConfig {
            workload: self.workload.clone(),
            policy: self.policy.clone(),
            load_control: self.load_control,
            mode: s.mode,
            horizon: s.horizon,
            warmup: s.warmup,
            seed,
            batches: s.batches.unwrap_or(10),
            record_history: false,
            check_invariants: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "workload": {"classes": [{"id": "t", "frequency": 1.0, "k": [4],
                       "step_time_dist": {"kind": "fixed", "mean": 1.0}}],
                     "dbrs": [{"id": "db", "D": 100}]},
        "mode": {"closed": {"mpl": 3}},
        "horizon": 100.0
    }"#;

    #[test]
    fn minimal_scenario_defaults() {
        let r = Scenario::from_json(MINIMAL).unwrap().resolve(Path::new(".")).unwrap();
        assert_eq!(r.policy, PolicyConfig::blocking());
        assert_eq!(r.load_control, LoadControlConfig::None);
        assert_eq!(r.scenario.replications, 1);
        assert_eq!(r.sim_config(5).seed, 5);
    }

    #[test]
    fn strict_schema() {
        let typo = MINIMAL.replace("\"horizon\"", "\"horizn\"");
        assert!(Scenario::from_json(&typo).is_err());
        let extra = MINIMAL.replace("\"horizon\": 100.0", "\"horizon\": 100.0, \"colour\": 1");
        assert!(Scenario::from_json(&extra).is_err());
    }

    #[test]
    fn rejects_bad_values() {
        let s = Scenario::from_json(&MINIMAL.replace("100.0", "0.0")).unwrap();
        assert!(s.resolve(Path::new(".")).is_err());
        let s = Scenario::from_json(&MINIMAL.replace("\"mpl\": 3", "\"mpl\": 0")).unwrap();
        assert!(s.resolve(Path::new(".")).is_err());
        let mut s = Scenario::from_json(MINIMAL).unwrap();
        s.workload_file = Some("w.json".into());
        assert!(s.resolve(Path::new(".")).is_err());
    }
}
